use std::f64::consts::{FRAC_1_SQRT_2, PI};

use super::tensor::Tensor;
use crate::error::Result;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Exact GELU, `x * Phi(x)`.
pub fn gelu(x: f64) -> f64 {
    x * normal_cdf(x)
}

pub fn gelu_derivative(x: f64) -> f64 {
    normal_cdf(x) + x * normal_pdf(x)
}

pub fn tanh_derivative(x: f64) -> f64 {
    let t = x.tanh();
    1.0 - t * t
}

pub fn gelu_forward(input: &Tensor) -> Tensor {
    input.map(gelu)
}

pub fn tanh_forward(input: &Tensor) -> Tensor {
    input.map(f64::tanh)
}

fn chain(grad_out: &Tensor, input: &Tensor, d: impl Fn(f64) -> f64) -> Result<Tensor> {
    grad_out.expect_shape("activation backward", input.shape())?;
    let data = grad_out
        .data()
        .iter()
        .zip(input.data())
        .map(|(g, &x)| g * d(x))
        .collect();
    Tensor::new(input.shape().to_vec(), data)
}

/// Gradient through GELU given the pre-activation input.
pub fn gelu_backward(grad_out: &Tensor, input: &Tensor) -> Result<Tensor> {
    chain(grad_out, input, gelu_derivative)
}

/// Gradient through tanh given the pre-activation input.
pub fn tanh_backward(grad_out: &Tensor, input: &Tensor) -> Result<Tensor> {
    chain(grad_out, input, tanh_derivative)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_reference_points() {
        assert_eq!(gelu(0.0), 0.0);
        assert_eq!(gelu_derivative(0.0), 0.5);
        // Phi(1) = 0.841344746068543
        assert!((gelu(1.0) - 0.841344746068543).abs() < 1e-14);
        assert!((gelu(-1.0) + 1.0 - 0.841344746068543).abs() < 1e-14);
    }

    #[test]
    fn tanh_reference_points() {
        assert_eq!(tanh_forward(&Tensor::zeros(&[1])).data(), &[0.0]);
        assert_eq!(tanh_derivative(0.0), 1.0);
    }
}
