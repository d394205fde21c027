//! Valid (unpadded, stride 1) 1-D cross-correlation.
//!
//! Each batch row is lowered to a `[C_in * K, L_out]` patch matrix and
//! multiplied by the `[C_out, C_in * K]` weight view.

use super::gemm::{gemm, Mat};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    /// `[C_out, C_in, K]`
    pub weight: Tensor,
    /// `[C_out]`
    pub bias: Tensor,
}

impl Conv1d {
    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        weight.expect_rank("Conv1d::new", 3)?;
        bias.expect_shape("Conv1d::new", &[weight.shape()[0]])?;
        Ok(Conv1d { weight, bias })
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn output_len(&self, input_len: usize) -> Option<usize> {
        input_len.checked_sub(self.kernel()).map(|d| d + 1)
    }
}

fn check_input(op: &'static str, input: &Tensor, layer: &Conv1d) -> Result<(usize, usize, usize)> {
    let shape = input.shape();
    let ok = shape.len() == 3 && shape[1] == layer.in_channels() && shape[2] >= layer.kernel();
    if !ok {
        return Err(Error::Shape {
            op,
            expected: vec![shape.first().copied().unwrap_or(0), layer.in_channels(), layer.kernel()],
            actual: shape.to_vec(),
        });
    }
    Ok((shape[0], shape[2], shape[2] - layer.kernel() + 1))
}

fn im2col(row: &[f64], c_in: usize, len: usize, k: usize, out_len: usize, cols: &mut [f64]) {
    for c in 0..c_in {
        let chan = &row[c * len..(c + 1) * len];
        for j in 0..k {
            let dst = &mut cols[(c * k + j) * out_len..(c * k + j + 1) * out_len];
            dst.copy_from_slice(&chan[j..j + out_len]);
        }
    }
}

pub fn conv1d_forward(input: &Tensor, layer: &Conv1d) -> Result<Tensor> {
    let (b, len, out_len) = check_input("conv1d_forward", input, layer)?;
    let (c_out, c_in, k) = (layer.out_channels(), layer.in_channels(), layer.kernel());
    let w = Mat::new(layer.weight.data(), c_out, c_in * k);
    let mut cols = vec![0.0; c_in * k * out_len];
    let mut out = vec![0.0; b * c_out * out_len];
    for (bi, dst) in out.chunks_exact_mut(c_out * out_len).enumerate() {
        im2col(input.row(bi), c_in, len, k, out_len, &mut cols);
        for (o, chan) in dst.chunks_exact_mut(out_len).enumerate() {
            chan.fill(layer.bias.data()[o]);
        }
        gemm(w, Mat::new(&cols, c_in * k, out_len), dst, 1.0);
    }
    Tensor::new(vec![b, c_out, out_len], out)
}

/// Returns `(grad_input, grad_weight, grad_bias)` given the forward input.
pub fn conv1d_backward(
    grad_out: &Tensor,
    input: &Tensor,
    layer: &Conv1d,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (b, len, out_len) = check_input("conv1d_backward", input, layer)?;
    let (c_out, c_in, k) = (layer.out_channels(), layer.in_channels(), layer.kernel());
    grad_out.expect_shape("conv1d_backward", &[b, c_out, out_len])?;

    let w = Mat::new(layer.weight.data(), c_out, c_in * k);
    let mut cols = vec![0.0; c_in * k * out_len];
    let mut gcols = vec![0.0; c_in * k * out_len];
    let mut gw = vec![0.0; c_out * c_in * k];
    let mut gb = vec![0.0; c_out];
    let mut gx = vec![0.0; b * c_in * len];

    for bi in 0..b {
        let g = grad_out.row(bi);
        im2col(input.row(bi), c_in, len, k, out_len, &mut cols);
        gemm(
            Mat::new(g, c_out, out_len),
            Mat::new(&cols, c_in * k, out_len).t(),
            &mut gw,
            1.0,
        );
        for (o, chan) in g.chunks_exact(out_len).enumerate() {
            gb[o] += chan.iter().sum::<f64>();
        }
        gemm(w.t(), Mat::new(g, c_out, out_len), &mut gcols, 0.0);
        let gx_row = &mut gx[bi * c_in * len..(bi + 1) * c_in * len];
        for c in 0..c_in {
            let chan = &mut gx_row[c * len..(c + 1) * len];
            for j in 0..k {
                let src = &gcols[(c * k + j) * out_len..(c * k + j + 1) * out_len];
                for (dst, s) in chan[j..j + out_len].iter_mut().zip(src) {
                    *dst += s;
                }
            }
        }
    }
    Ok((
        Tensor::new(vec![b, c_in, len], gx)?,
        Tensor::new(vec![c_out, c_in, k], gw)?,
        Tensor::new(vec![c_out], gb)?,
    ))
}
