//! Fixed Fourier low-pass feature layer.
//!
//! Computes the 1/N-normalized DFT of each input row and keeps bins
//! `0..bins`, emitting `[Re_0 .. Re_{bins-1}, Im_0 .. Im_{bins-1}]`. On the
//! canonical grid (N = 1024 over a 10/F window) bin spacing is 0.1 F, so 11
//! bins cover 0..=F. The layer is linear with no trainable parameters.

use std::f64::consts::PI;

use super::gemm::{gemm, Mat};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Bins kept on the canonical grid: 0, 0.1F, ..., F.
pub const CANONICAL_BINS: usize = 11;

#[derive(Debug, Clone, PartialEq)]
pub struct FourierLowpass {
    n: usize,
    bins: usize,
    /// `[2 * bins, n]` projection rows (cosines, then negated sines).
    basis: Vec<f64>,
}

impl FourierLowpass {
    pub fn new(n: usize, bins: usize) -> Self {
        let mut basis = vec![0.0; 2 * bins * n];
        let scale = 1.0 / n as f64;
        for k in 0..bins {
            for j in 0..n {
                // reduce k * j mod n before scaling to keep the angle exact
                let phase = 2.0 * PI * ((k * j) % n) as f64 / n as f64;
                basis[k * n + j] = phase.cos() * scale;
                basis[(bins + k) * n + j] = -phase.sin() * scale;
            }
        }
        FourierLowpass { n, bins, basis }
    }

    pub fn canonical() -> Self {
        Self::new(crate::scene::CANONICAL_SAMPLES, CANONICAL_BINS)
    }

    pub fn input_len(&self) -> usize {
        self.n
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn features(&self) -> usize {
        2 * self.bins
    }

    fn check(&self, op: &'static str, input: &Tensor) -> Result<usize> {
        let s = input.shape();
        if s.len() != 3 || s[1] != 1 || s[2] != self.n {
            return Err(Error::Shape {
                op,
                expected: vec![s.first().copied().unwrap_or(0), 1, self.n],
                actual: s.to_vec(),
            });
        }
        Ok(s[0])
    }

    /// `[B, 1, n] -> [B, 1, 2 * bins]`
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let b = self.check("fourier_lowpass_features", input)?;
        let f = self.features();
        let mut out = vec![0.0; b * f];
        gemm(
            Mat::new(input.data(), b, self.n),
            Mat::new(&self.basis, f, self.n).t(),
            &mut out,
            0.0,
        );
        Tensor::new(vec![b, 1, f], out)
    }

    /// Input gradient; there are no parameters to differentiate.
    pub fn backward(&self, grad_out: &Tensor) -> Result<Tensor> {
        let b = grad_out.batch();
        let f = self.features();
        if grad_out.len() != b * f {
            return Err(Error::Shape {
                op: "fourier_lowpass_backward",
                expected: vec![b, 1, f],
                actual: grad_out.shape().to_vec(),
            });
        }
        let mut gx = vec![0.0; b * self.n];
        gemm(
            Mat::new(grad_out.data(), b, f),
            Mat::new(&self.basis, f, self.n),
            &mut gx,
            0.0,
        );
        Tensor::new(vec![b, 1, self.n], gx)
    }
}

/// Canonical Fourier features flattened to `[B, 22]`.
pub fn fourier_lowpass_features(input: &Tensor) -> Result<Tensor> {
    let layer = FourierLowpass::canonical();
    let out = layer.forward(input)?;
    let b = out.batch();
    out.reshape(&[b, layer.features()])
}
