//! Bottleneck analyses: clean response curves and their endpoint scaling,
//! noisy mean/std statistics, monotonicity, pulse ranking and label-free
//! scene comparison.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;

use rayon::prelude::*;

use crate::csvio::{read_table, write_table};
use crate::error::{Error, Result};
use crate::model::AutoencoderModel;
use crate::nn::Tensor;
use crate::pulses::PulseSpec;
use crate::rng::{stream, Domain};
use crate::scene::{add_noise, noise_sigma_for_ratio, return_signal, sample_pulse, SampledSignal, SamplingGrid, SceneConfig};

pub const CLEAN_SEPARATIONS: usize = 256;
pub const NOISY_SEPARATIONS: usize = 101;
pub const NOISE_DRAWS: usize = 1000;
pub const DEFAULT_COMPARE_TOLERANCE: f64 = 1e-9;

/// Rows per encoder call when evaluating noisy draws.
const CHUNK: usize = 250;

/// Anything that maps a `[B, 1, N]` batch to one scalar per row.
pub trait Encoder: Sync {
    fn encode_batch(&self, batch: &Tensor) -> Result<Vec<f64>>;
}

impl Encoder for AutoencoderModel {
    fn encode_batch(&self, batch: &Tensor) -> Result<Vec<f64>> {
        Ok(self.encode(batch)?.into_data())
    }
}

/// `n` equally spaced separations covering `[0, 1]`, endpoints exact.
pub fn separations(n: usize) -> Vec<f64> {
    let last = (n.max(2) - 1) as f64;
    (0..n).map(|j| j as f64 / last).collect()
}

fn clean_rows(spec: &PulseSpec, seps: &[f64], grid: &SamplingGrid) -> Result<Vec<Vec<f64>>> {
    seps.iter()
        .map(|&l| Ok(return_signal(&SceneConfig::new(spec.clone(), l)?, grid)?.into_values()))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseCurve {
    pub separations: Vec<f64>,
    /// Raw encoder outputs `y_l`.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaledCurve {
    pub separations: Vec<f64>,
    /// `(y - y_i) / (y_f - y_i)`; first entry 0, last entry 1.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseStats {
    pub separations: Vec<f64>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub scaled_means: Vec<f64>,
    pub scaled_stds: Vec<f64>,
    pub target_ratio: f64,
    pub n_draws: usize,
}

impl NoiseStats {
    /// Average of the scaled deviation over all separations.
    pub fn mean_scaled_std(&self) -> f64 {
        self.scaled_stds.iter().sum::<f64>() / self.scaled_stds.len() as f64
    }
}

/// Encoder outputs on clean returns at `n_seps` separations spanning [0, 1].
pub fn encoder_response<E: Encoder + ?Sized>(
    encoder: &E,
    spec: &PulseSpec,
    n_seps: usize,
    grid: &SamplingGrid,
) -> Result<ResponseCurve> {
    if n_seps < 2 {
        return Err(Error::InvalidArgument("need at least two separations".into()));
    }
    let seps = separations(n_seps);
    let batch = Tensor::from_rows(&clean_rows(spec, &seps, grid)?)?;
    let values = encoder.encode_batch(&batch)?;
    Ok(ResponseCurve {
        separations: seps,
        values,
    })
}

fn endpoint_span(values: &[f64]) -> Result<(f64, f64)> {
    let (first, last) = match (values.first(), values.last()) {
        (Some(&a), Some(&b)) if values.len() >= 2 => (a, b),
        _ => {
            return Err(Error::InvalidArgument(
                "scaling needs at least two points".into(),
            ))
        }
    };
    let span = last - first;
    let max = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(span.abs() > 1e-15 * max) || !span.is_finite() {
        return Err(Error::DegenerateCurve { first, last });
    }
    Ok((first, span))
}

/// Endpoint scaling: `(y - y_i) / (y_f - y_i)`.
pub fn scale_curve(curve: &ResponseCurve) -> Result<ScaledCurve> {
    let (first, span) = endpoint_span(&curve.values)?;
    Ok(ScaledCurve {
        separations: curve.separations.clone(),
        values: curve.values.iter().map(|y| (y - first) / span).collect(),
    })
}

/// Shifted two-pass mean and population standard deviation. Identical
/// samples give exactly their value and exactly zero spread.
fn mean_std(xs: &[f64]) -> (f64, f64) {
    let pivot = xs[0];
    let n = xs.len() as f64;
    let mean = pivot + xs.iter().map(|x| x - pivot).sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Builds scaled statistics from raw per-separation means and deviations.
pub fn scale_stats(
    separations: Vec<f64>,
    means: Vec<f64>,
    stds: Vec<f64>,
    target_ratio: f64,
    n_draws: usize,
) -> Result<NoiseStats> {
    let (first, span) = endpoint_span(&means)?;
    let scaled_means = means.iter().map(|m| (m - first) / span).collect();
    let scaled_stds = stds.iter().map(|s| s / span.abs()).collect();
    Ok(NoiseStats {
        separations,
        means,
        stds,
        scaled_means,
        scaled_stds,
        target_ratio,
        n_draws,
    })
}

/// Mean and spread of the encoder output under input noise.
///
/// For separation index `s` the draws come from stream
/// `(seed, AnalysisNoise, s)`, so each (separation, draw) noise vector is
/// reproducible on its own and separations can be evaluated in parallel.
/// `target_ratio == 0` is accepted and yields zero spread.
pub fn noisy_response_stats<E: Encoder + ?Sized>(
    encoder: &E,
    spec: &PulseSpec,
    target_ratio: f64,
    n_seps: usize,
    n_draws: usize,
    seed: u64,
    grid: &SamplingGrid,
) -> Result<NoiseStats> {
    if n_seps < 2 || n_draws < 1 {
        return Err(Error::InvalidArgument(
            "need at least two separations and one draw".into(),
        ));
    }
    let sigma = if target_ratio == 0.0 {
        0.0
    } else {
        noise_sigma_for_ratio(target_ratio, grid.n_samples, 1.0)?
    };
    let seps = separations(n_seps);
    let clean = clean_rows(spec, &seps, grid)?;
    let n = grid.n_samples;

    let per_sep: Vec<(f64, f64)> = clean
        .par_iter()
        .enumerate()
        .map(|(s, row)| {
            let mut rng = stream(seed, Domain::AnalysisNoise, s as u64, 0);
            let mut outputs = Vec::with_capacity(n_draws);
            let mut done = 0;
            while done < n_draws {
                let rows = CHUNK.min(n_draws - done);
                let mut data = Vec::with_capacity(rows * n);
                for _ in 0..rows {
                    let start = data.len();
                    data.extend_from_slice(row);
                    add_noise(&mut data[start..], sigma, &mut rng);
                }
                outputs.extend(encoder.encode_batch(&Tensor::new(vec![rows, 1, n], data)?)?);
                done += rows;
            }
            Ok(mean_std(&outputs))
        })
        .collect::<Result<_>>()?;

    let (means, stds) = per_sep.into_iter().unzip();
    scale_stats(seps, means, stds, target_ratio, n_draws)
}

/// Fraction of consecutive pairs that strictly increase.
pub fn monotonicity_fraction(curve: &ScaledCurve) -> f64 {
    let v = &curve.values;
    if v.len() < 2 {
        return 0.0;
    }
    let up = v.windows(2).filter(|w| w[1] > w[0]).count();
    up as f64 / (v.len() - 1) as f64
}

/// Orders signals by mean scaled deviation, best (smallest) first. Ties fall
/// back to the label's string form.
pub fn rank_signals<K: Ord + Clone + Display>(stats: &BTreeMap<K, NoiseStats>) -> Result<Vec<(K, f64)>> {
    let mut entries = stats.iter();
    if let Some((_, first)) = entries.next() {
        for (k, s) in entries {
            if s.separations != first.separations {
                return Err(Error::InvalidArgument(format!(
                    "statistics for {k} use a different separation grid"
                )));
            }
        }
    }
    let mut ranked: Vec<(K, f64)> = stats
        .iter()
        .map(|(k, s)| (k.clone(), s.mean_scaled_std()))
        .collect();
    ranked.sort_by(|a, b| {
        a.1.total_cmp(&b.1)
            .then_with(|| a.0.to_string().cmp(&b.0.to_string()))
    });
    Ok(ranked)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneOrder {
    FirstLarger,
    SecondLarger,
    Indistinguishable,
}

/// Decides which of two scenes has the larger separation without labels:
/// the outgoing pulse itself gives the zero-separation reference `y0`, and
/// the scene whose output lies further from it wins.
pub fn compare_scenes<E: Encoder + ?Sized>(
    encoder: &E,
    spec: &PulseSpec,
    first: &SampledSignal,
    second: &SampledSignal,
    tolerance: f64,
) -> Result<SceneOrder> {
    let reference = sample_pulse(spec, first.grid())?;
    let batch = Tensor::from_rows(&[reference.values(), first.values(), second.values()])?;
    let y = encoder.encode_batch(&batch)?;
    Ok(order_from_outputs(y[0], y[1], y[2], tolerance))
}

pub(crate) fn order_from_outputs(y0: f64, y1: f64, y2: f64, tolerance: f64) -> SceneOrder {
    let d1 = (y1 - y0).abs();
    let d2 = (y2 - y0).abs();
    if (d1 - d2).abs() < tolerance {
        SceneOrder::Indistinguishable
    } else if d1 > d2 {
        SceneOrder::FirstLarger
    } else {
        SceneOrder::SecondLarger
    }
}

impl ResponseCurve {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_table(path, &["separation", "value"], &[&self.separations, &self.values])
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let t = read_table(path)?;
        Ok(ResponseCurve {
            separations: t.require("separation", path)?.to_vec(),
            values: t.require("value", path)?.to_vec(),
        })
    }
}

impl ScaledCurve {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_table(path, &["separation", "value"], &[&self.separations, &self.values])
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let t = read_table(path)?;
        Ok(ScaledCurve {
            separations: t.require("separation", path)?.to_vec(),
            values: t.require("value", path)?.to_vec(),
        })
    }
}

const STATS_HEADER: [&str; 7] = [
    "separation",
    "value",
    "std",
    "raw_mean",
    "raw_std",
    "target_ratio",
    "n_draws",
];

impl NoiseStats {
    /// Columns: separation, scaled mean, scaled std, raw mean, raw std, and
    /// the (constant) noise ratio and draw count.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let n = self.separations.len();
        let ratio = vec![self.target_ratio; n];
        let draws = vec![self.n_draws as f64; n];
        write_table(
            path,
            &STATS_HEADER,
            &[
                &self.separations,
                &self.scaled_means,
                &self.scaled_stds,
                &self.means,
                &self.stds,
                &ratio,
                &draws,
            ],
        )
    }

    /// Reads a stats table; the scaled columns are recomputed from the raw
    /// ones so they always satisfy the endpoint contract.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let t = read_table(path)?;
        let seps = t.require("separation", path)?.to_vec();
        let means = t.require("raw_mean", path)?.to_vec();
        let stds = t.require("raw_std", path)?.to_vec();
        let ratio = t.require("target_ratio", path)?.first().copied().unwrap_or(f64::NAN);
        let draws = t.require("n_draws", path)?.first().copied().unwrap_or(0.0) as usize;
        scale_stats(seps, means, stds, ratio, draws)
    }
}
