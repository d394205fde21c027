//! Full-batch training of single autoencoders and seeded ensembles.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AutoencoderModel, EncoderKind};
use crate::nn::{mse_grad, mse_loss, AdamConfig, AdamState, Tensor};
use crate::pulses::PulseSpec;
use crate::rng::{stream, Domain};
use crate::scene::{add_noise, noise_sigma_for_ratio, return_signal, SamplingGrid, SceneConfig};

pub const NOISELESS_EPOCHS: usize = 3000;
pub const NOISY_EPOCHS: usize = 5000;
pub const BATCH_SIZE: usize = 512;
pub const ENSEMBLE_SIZE: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub pulse: PulseSpec,
    /// Noise-to-signal ratio for denoising training; `None` trains on clean
    /// inputs. `Some(0.0)` runs the denoising path with zero-sigma noise.
    pub target_ratio: Option<f64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub master_seed: u64,
    pub ensemble_size: usize,
    pub grid: SamplingGrid,
}

impl TrainConfig {
    /// Long-run defaults: 3000 epochs clean, 5000 noisy, 20 members.
    pub fn new(pulse: PulseSpec, target_ratio: Option<f64>, master_seed: u64) -> Self {
        TrainConfig {
            pulse,
            target_ratio,
            epochs: if target_ratio.is_some() {
                NOISY_EPOCHS
            } else {
                NOISELESS_EPOCHS
            },
            batch_size: BATCH_SIZE,
            learning_rate: 1e-3,
            master_seed,
            ensemble_size: ENSEMBLE_SIZE,
            grid: SamplingGrid::canonical(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pulse.validate()?;
        if self.epochs < 1 {
            return Err(Error::InvalidArgument("epochs must be >= 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidArgument("batch size must be >= 2".into()));
        }
        if self.ensemble_size < 1 {
            return Err(Error::InvalidArgument("ensemble size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        if let Some(r) = self.target_ratio {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "noise ratio must be non-negative, got {r}"
                )));
            }
        }
        Ok(())
    }

    /// Per-sample noise sigma, if training is in denoising mode.
    pub fn noise_sigma(&self) -> Result<Option<f64>> {
        match self.target_ratio {
            None => Ok(None),
            Some(r) if r == 0.0 => Ok(Some(0.0)),
            Some(r) => noise_sigma_for_ratio(r, self.grid.n_samples, 1.0).map(Some),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub member: u64,
    pub master_seed: u64,
    pub losses: Vec<f64>,
    pub wall_time_secs: f64,
}

impl TrainReport {
    pub fn final_loss(&self) -> f64 {
        *self.losses.last().expect("at least one epoch")
    }
}

/// The fixed training batch: `batch_size` equally spaced separations over
/// `[0, 1]` and their normalized clean returns, as `[B, 1, N]`.
pub fn make_training_batch(spec: &PulseSpec, batch_size: usize, grid: &SamplingGrid) -> Result<(Tensor, Vec<f64>)> {
    if batch_size < 2 {
        return Err(Error::InvalidArgument("batch size must be >= 2".into()));
    }
    let last = (batch_size - 1) as f64;
    let seps: Vec<f64> = (0..batch_size).map(|j| j as f64 / last).collect();
    let rows = seps
        .iter()
        .map(|&l| {
            return_signal(&SceneConfig::new(spec.clone(), l)?, grid).map(|s| s.into_values())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((Tensor::from_rows(&rows)?, seps))
}

/// Trains ensemble member `member` of `config`.
///
/// Initialization uses stream `(master_seed, Init, member)`; the noise of
/// epoch `e` uses stream `(master_seed, TrainNoise, member, e)`, regenerated
/// for every signal each epoch.
pub fn train_autoencoder(
    kind: EncoderKind,
    config: &TrainConfig,
    member: u64,
) -> Result<(AutoencoderModel, TrainReport)> {
    config.validate()?;
    let (clean, _) = make_training_batch(&config.pulse, config.batch_size, &config.grid)?;
    train_on_batch(kind, config, member, &clean)
}

fn train_on_batch(
    kind: EncoderKind,
    config: &TrainConfig,
    member: u64,
    clean: &Tensor,
) -> Result<(AutoencoderModel, TrainReport)> {
    let started = Instant::now();
    let sigma = config.noise_sigma()?;
    let mut model = AutoencoderModel::seeded(kind, config.master_seed, member)?;
    let adam_config = AdamConfig {
        learning_rate: config.learning_rate,
        ..AdamConfig::default()
    };
    let mut adam = AdamState::new(adam_config, model.params());
    let mut losses = Vec::with_capacity(config.epochs);
    let mut noisy = clean.clone();

    for epoch in 0..config.epochs {
        let input = match sigma {
            None => clean,
            Some(sigma) => {
                let mut rng = stream(config.master_seed, Domain::TrainNoise, member, epoch as u64);
                noisy.data_mut().copy_from_slice(clean.data());
                add_noise(noisy.data_mut(), sigma, &mut rng);
                &noisy
            }
        };
        let (_, x_hat, cache) = model.forward_cached(input)?;
        let loss = mse_loss(&x_hat, clean)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss });
        }
        losses.push(loss);
        let grad = mse_grad(&x_hat, clean)?;
        let grads = model.backward(&cache, &grad)?;
        adam.update(&mut model.params_mut(), &grads)?;
        if epoch % 100 == 0 {
            log::debug!("member {member} epoch {epoch} loss {loss:.6e}");
        }
    }

    let report = TrainReport {
        member,
        master_seed: config.master_seed,
        wall_time_secs: started.elapsed().as_secs_f64(),
        losses,
    };
    model.metadata.pulse = Some(config.pulse.kind);
    model.metadata.target_ratio = config.target_ratio;
    model.metadata.epochs = config.epochs;
    model.metadata.final_loss = Some(report.final_loss());
    Ok((model, report))
}

/// Trains `config.ensemble_size` members in parallel. Member `k` depends only
/// on `(master_seed, k)`.
pub fn train_ensemble(
    kind: EncoderKind,
    config: &TrainConfig,
) -> Result<Vec<(AutoencoderModel, TrainReport)>> {
    let members: Vec<u64> = (0..config.ensemble_size as u64).collect();
    train_members(kind, config, &members)
}

/// Trains the listed members of an ensemble, in parallel, returning them in
/// the given order.
pub fn train_members(
    kind: EncoderKind,
    config: &TrainConfig,
    members: &[u64],
) -> Result<Vec<(AutoencoderModel, TrainReport)>> {
    config.validate()?;
    let (clean, _) = make_training_batch(&config.pulse, config.batch_size, &config.grid)?;
    members
        .par_iter()
        .map(|&k| {
            train_on_batch(kind, config, k, &clean).map_err(|e| Error::Member {
                member: k as usize,
                source: Box::new(e),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_endpoints_and_first_row() {
        let grid = SamplingGrid::canonical();
        let (batch, seps) = make_training_batch(&PulseSpec::bessel(), 8, &grid).unwrap();
        assert_eq!(batch.shape(), &[8, 1, 1024]);
        assert_eq!(seps[0], 0.0);
        assert_eq!(seps[7], 1.0);
        let pulse = crate::scene::sample_pulse(&PulseSpec::bessel(), &grid).unwrap();
        assert_eq!(batch.row(0), pulse.values());
    }

    #[test]
    fn tiny_batches_are_rejected() {
        let grid = SamplingGrid::canonical();
        assert!(make_training_batch(&PulseSpec::sinc(), 1, &grid).is_err());
        let mut cfg = TrainConfig::new(PulseSpec::sinc(), None, 0);
        cfg.epochs = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::new(PulseSpec::sinc(), Some(-1.0), 0);
        cfg.epochs = 1;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn default_epochs_follow_mode() {
        assert_eq!(TrainConfig::new(PulseSpec::sinc(), None, 0).epochs, 3000);
        assert_eq!(TrainConfig::new(PulseSpec::sinc(), Some(1.0), 0).epochs, 5000);
    }
}
