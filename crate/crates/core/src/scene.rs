//! Clean and noisy two-scatterer return signals on the sampling grid.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use std::path::Path;

use crate::csvio::{read_table, write_table};
use crate::error::{Error, Result};
use crate::pulses::PulseSpec;

/// Samples per signal in the canonical pipeline.
pub const CANONICAL_SAMPLES: usize = 1024;

/// Midpoint-rule grid over `[t_min, t_max]` (units of 1/F).
///
/// Sample `k` sits at `t_min + (k + 0.5) * dt`, so a symmetric window gives a
/// grid with `t_k = -t_{N-1-k}` and no sample at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingGrid {
    pub t_min: f64,
    pub t_max: f64,
    pub n_samples: usize,
}

impl Default for SamplingGrid {
    fn default() -> Self {
        SamplingGrid::canonical()
    }
}

impl SamplingGrid {
    pub fn canonical() -> Self {
        SamplingGrid {
            t_min: -5.0,
            t_max: 5.0,
            n_samples: CANONICAL_SAMPLES,
        }
    }

    pub fn new(t_min: f64, t_max: f64, n_samples: usize) -> Result<Self> {
        if !(t_max > t_min) || n_samples == 0 {
            return Err(Error::InvalidArgument(format!(
                "bad grid [{t_min}, {t_max}] with {n_samples} samples"
            )));
        }
        Ok(SamplingGrid {
            t_min,
            t_max,
            n_samples,
        })
    }

    pub fn span(&self) -> f64 {
        self.t_max - self.t_min
    }

    pub fn step(&self) -> f64 {
        self.span() / self.n_samples as f64
    }

    pub fn point(&self, k: usize) -> f64 {
        self.t_min + (k as f64 + 0.5) * self.step()
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_samples).map(move |k| self.point(k))
    }
}

/// Real amplitudes sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    values: Vec<f64>,
    grid: SamplingGrid,
    normalized: bool,
}

impl SampledSignal {
    pub fn new(values: Vec<f64>, grid: SamplingGrid) -> Result<Self> {
        if values.len() != grid.n_samples {
            return Err(Error::Shape {
                op: "SampledSignal::new",
                expected: vec![grid.n_samples],
                actual: vec![values.len()],
            });
        }
        Ok(SampledSignal {
            values,
            grid,
            normalized: false,
        })
    }

    /// Writes `t,amplitude` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let t: Vec<f64> = self.grid.points().collect();
        write_table(path, &["t", "amplitude"], &[&t, &self.values])
    }

    /// Reads a `t,amplitude` table, which must sit on `grid`.
    pub fn read_csv(path: &Path, grid: &SamplingGrid) -> Result<Self> {
        let table = read_table(path)?;
        let t = table.require("t", path)?;
        let values = table.require("amplitude", path)?.to_vec();
        let off_grid = t.len() != grid.n_samples
            || t.iter().zip(grid.points()).any(|(a, b)| (a - b).abs() > 1e-9 * grid.span());
        if off_grid {
            return Err(Error::Csv {
                path: path.to_path_buf(),
                msg: format!(
                    "samples do not match the grid [{}, {}] with {} points",
                    grid.t_min, grid.t_max, grid.n_samples
                ),
            });
        }
        SampledSignal::new(values, *grid)
    }

    /// Samples `f` at every grid point.
    pub fn from_fn(grid: SamplingGrid, f: impl Fn(f64) -> f64) -> Self {
        SampledSignal {
            values: grid.points().map(f).collect(),
            grid,
            normalized: false,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn grid(&self) -> &SamplingGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }

    /// Scales to unit Euclidean norm. A signal already flagged as normalized
    /// is returned untouched.
    pub fn normalized(mut self) -> Option<Self> {
        if self.normalized {
            return Some(self);
        }
        let norm = self.norm();
        if norm == 0.0 || !norm.is_finite() {
            return None;
        }
        self.values.iter_mut().for_each(|v| *v /= norm);
        self.normalized = true;
        Some(self)
    }
}

pub(crate) fn l2_norm(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Pulse plus the separation of the two equal scatterers.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub pulse: PulseSpec,
    pub separation: f64,
}

impl SceneConfig {
    pub fn new(pulse: PulseSpec, separation: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&separation) {
            return Err(Error::InvalidArgument(format!(
                "scatterer separation must lie in [0, 1], got {separation}"
            )));
        }
        Ok(SceneConfig { pulse, separation })
    }
}

/// Evaluates the outgoing pulse on the grid and normalizes it.
pub fn sample_pulse(spec: &PulseSpec, grid: &SamplingGrid) -> Result<SampledSignal> {
    spec.validate()?;
    SampledSignal::from_fn(*grid, |t| spec.eval(t))
        .normalized()
        .ok_or_else(|| Error::DegeneratePulse(spec.kind.to_string()))
}

/// Noiseless return from two half-amplitude copies of the pulse shifted by
/// `+-l/2`, evaluated analytically at the grid points and normalized.
pub fn return_signal(scene: &SceneConfig, grid: &SamplingGrid) -> Result<SampledSignal> {
    let l = scene.separation;
    if !(0.0..=1.0).contains(&l) {
        return Err(Error::InvalidArgument(format!(
            "scatterer separation must lie in [0, 1], got {l}"
        )));
    }
    scene.pulse.validate()?;
    let spec = &scene.pulse;
    let half = 0.5 * l;
    SampledSignal::from_fn(*grid, |t| 0.5 * (spec.eval(t - half) + spec.eval(t + half)))
        .normalized()
        .ok_or_else(|| Error::DegeneratePulse(spec.kind.to_string()))
}

/// Per-sample noise deviation whose expected noise norm equals
/// `target_ratio * ref_norm` over `n_samples` samples.
pub fn noise_sigma_for_ratio(target_ratio: f64, n_samples: usize, ref_norm: f64) -> Result<f64> {
    if !(target_ratio > 0.0) || !target_ratio.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "noise ratio must be positive, got {target_ratio}"
        )));
    }
    if !(ref_norm > 0.0) || n_samples == 0 {
        return Err(Error::InvalidArgument(format!(
            "reference norm ({ref_norm}) and sample count ({n_samples}) must be positive"
        )));
    }
    Ok(target_ratio * ref_norm / (n_samples as f64).sqrt())
}

/// Additive white Gaussian detector noise.
///
/// `target_ratio` is the noise-norm to outgoing-signal-norm ratio
/// `||xi|| / ||X(0)||` (what the experiments call SNR). The sampled outgoing
/// pulse is unit-norm, so the reference norm is 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub target_ratio: f64,
    pub sigma_per_sample: f64,
    pub rng_seed: u64,
}

impl NoiseModel {
    pub fn new(target_ratio: f64, n_samples: usize, rng_seed: u64) -> Result<Self> {
        Ok(NoiseModel {
            target_ratio,
            sigma_per_sample: noise_sigma_for_ratio(target_ratio, n_samples, 1.0)?,
            rng_seed,
        })
    }

    /// Noise-free model, handy for degeneracy checks.
    pub fn silent(rng_seed: u64) -> Self {
        NoiseModel {
            target_ratio: 0.0,
            sigma_per_sample: 0.0,
            rng_seed,
        }
    }
}

/// Adds i.i.d. zero-mean Gaussian noise with the model's per-sample sigma.
/// The result is not re-normalized.
pub fn corrupt<R: Rng + ?Sized>(
    signal: &SampledSignal,
    noise: &NoiseModel,
    rng: &mut R,
) -> SampledSignal {
    let mut values = signal.values.clone();
    add_noise(&mut values, noise.sigma_per_sample, rng);
    SampledSignal {
        values,
        grid: signal.grid,
        normalized: false,
    }
}

/// In-place `x += sigma * N(0, 1)` for every element; draws are taken even
/// when `sigma == 0` so generator state does not depend on the noise level.
pub fn add_noise<R: Rng + ?Sized>(values: &mut [f64], sigma: f64, rng: &mut R) {
    for v in values.iter_mut() {
        let g: f64 = rng.sample(StandardNormal);
        *v += sigma * g;
    }
}
