use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Non-overlapping max pooling (kernel == stride). Trailing samples that do
/// not fill a window are dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxPool1d {
    pub kernel: usize,
}

/// Flat input index of the winning element of every output position.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolCache {
    pub input_shape: Vec<usize>,
    pub argmax: Vec<usize>,
}

pub fn maxpool1d_forward(input: &Tensor, pool: MaxPool1d) -> Result<(Tensor, PoolCache)> {
    let shape = input.shape();
    if shape.len() != 3 || shape[2] < pool.kernel || pool.kernel == 0 {
        return Err(Error::Shape {
            op: "maxpool1d_forward",
            expected: vec![0, 0, pool.kernel],
            actual: shape.to_vec(),
        });
    }
    let (b, c, len) = (shape[0], shape[1], shape[2]);
    let out_len = len / pool.kernel;
    let mut out = Vec::with_capacity(b * c * out_len);
    let mut argmax = Vec::with_capacity(b * c * out_len);
    for (lane, chan) in input.data().chunks_exact(len).enumerate() {
        for win in 0..out_len {
            let start = win * pool.kernel;
            let mut best = start;
            for i in start + 1..start + pool.kernel {
                // strict comparison: the first maximum wins ties
                if chan[i] > chan[best] {
                    best = i;
                }
            }
            out.push(chan[best]);
            argmax.push(lane * len + best);
        }
    }
    Ok((
        Tensor::new(vec![b, c, out_len], out)?,
        PoolCache {
            input_shape: shape.to_vec(),
            argmax,
        },
    ))
}

pub fn maxpool1d_backward(grad_out: &Tensor, cache: &PoolCache) -> Result<Tensor> {
    if grad_out.len() != cache.argmax.len() {
        return Err(Error::StaleCache("maxpool1d_backward"));
    }
    let mut gx = Tensor::zeros(&cache.input_shape);
    let data = gx.data_mut();
    for (&idx, &g) in cache.argmax.iter().zip(grad_out.data()) {
        data[idx] += g;
    }
    Ok(gx)
}
