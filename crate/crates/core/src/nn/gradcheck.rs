//! Central finite-difference checks of every layer's backward pass.
//!
//! The objective for a layer is a fixed random projection `sum_i c_i y_i` of
//! its output, so the analytic gradient is `backward(c)`. Errors are reported
//! as `||analytic - numeric|| / max(||analytic||, ||numeric||)`.

use rand::Rng;
use rand_distr::StandardNormal;

use super::init::{init_conv1d, init_linear};
use super::layer::Layer;
use super::loss::{mse_grad, mse_loss};
use super::pool::MaxPool1d;
use super::tensor::Tensor;
use crate::error::Result;
use crate::rng::{stream, Domain};

pub const STEP: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GradCheck {
    pub layer: &'static str,
    pub input_shape: Vec<usize>,
    /// Worst relative error over the input and each parameter tensor.
    pub rel_error: f64,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.rel_error < TOLERANCE
    }
}

fn random_tensor<R: Rng>(rng: &mut R, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape product")
}

pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n) * (a - n))
        .sum::<f64>()
        .sqrt();
    let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    let denom = na.max(nn);
    if denom == 0.0 {
        0.0
    } else {
        diff / denom
    }
}

fn projection(layer: &Layer, input: &Tensor, c: &Tensor) -> Result<f64> {
    let y = layer.forward(input)?;
    Ok(y.data().iter().zip(c.data()).map(|(a, b)| a * b).sum())
}

/// Checks input and parameter gradients of `layer` at `input`.
pub fn check_layer<R: Rng>(layer: &Layer, input: &Tensor, rng: &mut R) -> Result<GradCheck> {
    let (out, cache) = layer.forward_cached(input)?;
    let c = random_tensor(rng, out.shape());
    let (gx, gparams) = layer.backward(&cache, &c)?;

    let mut worst = 0.0f64;
    let mut x = input.clone();
    let mut numeric = vec![0.0; x.len()];
    for i in 0..x.len() {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + STEP;
        let plus = projection(layer, &x, &c)?;
        x.data_mut()[i] = orig - STEP;
        let minus = projection(layer, &x, &c)?;
        x.data_mut()[i] = orig;
        numeric[i] = (plus - minus) / (2.0 * STEP);
    }
    worst = worst.max(relative_error(gx.data(), &numeric));

    let mut probe = layer.clone();
    for (p, analytic) in gparams.iter().enumerate() {
        let mut numeric = vec![0.0; analytic.len()];
        for i in 0..analytic.len() {
            let orig = probe.params()[p].data()[i];
            probe.params_mut()[p].data_mut()[i] = orig + STEP;
            let plus = projection(&probe, input, &c)?;
            probe.params_mut()[p].data_mut()[i] = orig - STEP;
            let minus = projection(&probe, input, &c)?;
            probe.params_mut()[p].data_mut()[i] = orig;
            numeric[i] = (plus - minus) / (2.0 * STEP);
        }
        worst = worst.max(relative_error(analytic.data(), &numeric));
    }
    Ok(GradCheck {
        layer: layer.name(),
        input_shape: input.shape().to_vec(),
        rel_error: worst,
    })
}

/// Checks the MSE gradient with respect to the prediction.
pub fn check_mse(pred: &Tensor, target: &Tensor) -> Result<GradCheck> {
    let analytic = mse_grad(pred, target)?;
    let mut p = pred.clone();
    let mut numeric = vec![0.0; p.len()];
    for i in 0..p.len() {
        let orig = p.data()[i];
        p.data_mut()[i] = orig + STEP;
        let plus = mse_loss(&p, target)?;
        p.data_mut()[i] = orig - STEP;
        let minus = mse_loss(&p, target)?;
        p.data_mut()[i] = orig;
        numeric[i] = (plus - minus) / (2.0 * STEP);
    }
    Ok(GradCheck {
        layer: "mse",
        input_shape: pred.shape().to_vec(),
        rel_error: relative_error(analytic.data(), &numeric),
    })
}

/// Runs `cases` randomly shaped checks for each layer type.
pub fn run_suite(seed: u64, cases: usize) -> Result<Vec<GradCheck>> {
    let mut out = Vec::new();
    for case in 0..cases as u64 {
        let mut rng = stream(seed, Domain::Test, case, 0);
        let b = rng.random_range(1..=3);
        let c_in = rng.random_range(1..=3);
        let c_out = rng.random_range(1..=3);
        let k = rng.random_range(1..=4);
        let len = rng.random_range(k..k + 8);
        let conv = Layer::Conv1d(init_conv1d(&mut rng, c_in, c_out, k));
        let x = random_tensor(&mut rng, &[b, c_in, len]);
        out.push(check_layer(&conv, &x, &mut rng)?);

        let windows = rng.random_range(1..=4);
        let pool_len = 4 * windows + rng.random_range(0..4);
        let x = random_tensor(&mut rng, &[b, c_in, pool_len]);
        out.push(check_layer(&Layer::MaxPool1d(MaxPool1d { kernel: 4 }), &x, &mut rng)?);

        let f_in = rng.random_range(1..=6);
        let f_out = rng.random_range(1..=6);
        let x = random_tensor(&mut rng, &[b, f_in]);
        out.push(check_layer(&Layer::Gelu, &x, &mut rng)?);
        out.push(check_layer(&Layer::Tanh, &x, &mut rng)?);
        let lin = Layer::Linear(init_linear(&mut rng, f_in, f_out));
        out.push(check_layer(&lin, &x, &mut rng)?);

        let n = rng.random_range(2..=16);
        let pred = random_tensor(&mut rng, &[b, 1, n]);
        let target = random_tensor(&mut rng, &[b, 1, n]);
        out.push(check_mse(&pred, &target)?);
    }
    Ok(out)
}
