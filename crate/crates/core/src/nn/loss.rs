use super::tensor::Tensor;
use crate::error::Result;

/// Mean squared error over every element.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<f64> {
    target.expect_shape("mse_loss", pred.shape())?;
    let n = pred.len() as f64;
    Ok(pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n)
}

/// `d loss / d pred = 2 (pred - target) / numel`.
pub fn mse_grad(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    target.expect_shape("mse_grad", pred.shape())?;
    let scale = 2.0 / pred.len() as f64;
    let data = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| scale * (p - t))
        .collect();
    Tensor::new(pred.shape().to_vec(), data)
}
