use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::conv::Conv1d;
use super::linear::Linear;
use super::tensor::Tensor;

/// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` samples.
pub fn uniform_fan_in<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    let n = shape.iter().product();
    let data = (0..n).map(|_| dist.sample(rng)).collect();
    Tensor::new(shape.to_vec(), data).expect("length matches shape")
}

pub fn init_linear<R: Rng + ?Sized>(rng: &mut R, in_features: usize, out_features: usize) -> Linear {
    let weight = uniform_fan_in(rng, &[out_features, in_features], in_features);
    let bias = uniform_fan_in(rng, &[out_features], in_features);
    Linear { weight, bias }
}

pub fn init_conv1d<R: Rng + ?Sized>(
    rng: &mut R,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
) -> Conv1d {
    let fan_in = in_channels * kernel;
    let weight = uniform_fan_in(rng, &[out_channels, in_channels, kernel], fan_in);
    let bias = uniform_fan_in(rng, &[out_channels], fan_in);
    Conv1d { weight, bias }
}
