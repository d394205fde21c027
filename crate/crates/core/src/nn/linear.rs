use super::gemm::{gemm, Mat};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Affine map `y = x W^T + b` on `[B, F_in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `[F_out, F_in]`
    pub weight: Tensor,
    /// `[F_out]`
    pub bias: Tensor,
}

impl Linear {
    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        weight.expect_rank("Linear::new", 2)?;
        bias.expect_shape("Linear::new", &[weight.shape()[0]])?;
        Ok(Linear { weight, bias })
    }

    pub fn in_features(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weight.shape()[0]
    }
}

pub fn linear_forward(input: &Tensor, layer: &Linear) -> Result<Tensor> {
    let (fo, fi) = (layer.out_features(), layer.in_features());
    if input.shape().len() != 2 || input.shape()[1] != fi {
        return Err(Error::Shape {
            op: "linear_forward",
            expected: vec![input.batch(), fi],
            actual: input.shape().to_vec(),
        });
    }
    let b = input.batch();
    let mut out = vec![0.0; b * fo];
    for row in out.chunks_exact_mut(fo) {
        row.copy_from_slice(layer.bias.data());
    }
    gemm(
        Mat::new(input.data(), b, fi),
        Mat::new(layer.weight.data(), fo, fi).t(),
        &mut out,
        1.0,
    );
    Tensor::new(vec![b, fo], out)
}

/// Returns `(grad_input, grad_weight, grad_bias)`.
pub fn linear_backward(
    grad_out: &Tensor,
    input: &Tensor,
    layer: &Linear,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (fo, fi) = (layer.out_features(), layer.in_features());
    let b = input.batch();
    input.expect_shape("linear_backward", &[b, fi])?;
    grad_out.expect_shape("linear_backward", &[b, fo])?;

    let mut gw = vec![0.0; fo * fi];
    gemm(
        Mat::new(grad_out.data(), b, fo).t(),
        Mat::new(input.data(), b, fi),
        &mut gw,
        0.0,
    );
    let mut gb = vec![0.0; fo];
    for row in grad_out.data().chunks_exact(fo) {
        for (acc, g) in gb.iter_mut().zip(row) {
            *acc += g;
        }
    }
    let mut gx = vec![0.0; b * fi];
    gemm(
        Mat::new(grad_out.data(), b, fo),
        Mat::new(layer.weight.data(), fo, fi),
        &mut gx,
        0.0,
    );
    Ok((
        Tensor::new(vec![b, fi], gx)?,
        Tensor::new(vec![fo, fi], gw)?,
        Tensor::new(vec![fo], gb)?,
    ))
}
