//! Layer dispatch and fixed reverse sweeps over a layer list.

use super::activation::{gelu_backward, gelu_forward, tanh_backward, tanh_forward};
use super::conv::{conv1d_backward, conv1d_forward, Conv1d};
use super::fourier::FourierLowpass;
use super::linear::{linear_backward, linear_forward, Linear};
use super::pool::{maxpool1d_backward, maxpool1d_forward, MaxPool1d, PoolCache};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv1d(Conv1d),
    MaxPool1d(MaxPool1d),
    Gelu,
    Tanh,
    /// `[B, ...] -> [B, prod(...)]`
    Flatten,
    Linear(Linear),
    Fourier(FourierLowpass),
    /// `[B, ...] -> [B, dims...]`
    Reshape(Vec<usize>),
}

/// What a layer keeps from forward for its backward pass.
#[derive(Debug, Clone)]
pub enum Cache {
    Input(Tensor),
    Pool(PoolCache),
    Shape(Vec<usize>),
    None,
}

impl Layer {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv1d(_) => "conv1d",
            Layer::MaxPool1d(_) => "maxpool1d",
            Layer::Gelu => "gelu",
            Layer::Tanh => "tanh",
            Layer::Flatten => "flatten",
            Layer::Linear(_) => "linear",
            Layer::Fourier(_) => "fourier",
            Layer::Reshape(_) => "reshape",
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Layer::Conv1d(c) => vec![&c.weight, &c.bias],
            Layer::Linear(l) => vec![&l.weight, &l.bias],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Conv1d(c) => vec![&mut c.weight, &mut c.bias],
            Layer::Linear(l) => vec![&mut l.weight, &mut l.bias],
            _ => Vec::new(),
        }
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        self.forward_cached(input).map(|(out, _)| out)
    }

    pub fn forward_cached(&self, input: &Tensor) -> Result<(Tensor, Cache)> {
        Ok(match self {
            Layer::Conv1d(c) => (conv1d_forward(input, c)?, Cache::Input(input.clone())),
            Layer::MaxPool1d(p) => {
                let (out, cache) = maxpool1d_forward(input, *p)?;
                (out, Cache::Pool(cache))
            }
            Layer::Gelu => (gelu_forward(input), Cache::Input(input.clone())),
            Layer::Tanh => (tanh_forward(input), Cache::Input(input.clone())),
            Layer::Flatten => {
                let b = input.batch();
                let n = input.row_len();
                (input.clone().reshape(&[b, n])?, Cache::Shape(input.shape().to_vec()))
            }
            Layer::Linear(l) => (linear_forward(input, l)?, Cache::Input(input.clone())),
            Layer::Fourier(f) => (f.forward(input)?, Cache::None),
            Layer::Reshape(dims) => {
                let mut shape = vec![input.batch()];
                shape.extend_from_slice(dims);
                (input.clone().reshape(&shape)?, Cache::Shape(input.shape().to_vec()))
            }
        })
    }

    /// Returns the input gradient and the parameter gradients (in
    /// [`Layer::params`] order).
    pub fn backward(&self, cache: &Cache, grad_out: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let stale = || Error::StaleCache(self.name());
        Ok(match (self, cache) {
            (Layer::Conv1d(c), Cache::Input(x)) => {
                let (gx, gw, gb) = conv1d_backward(grad_out, x, c)?;
                (gx, vec![gw, gb])
            }
            (Layer::MaxPool1d(_), Cache::Pool(p)) => (maxpool1d_backward(grad_out, p)?, vec![]),
            (Layer::Gelu, Cache::Input(x)) => (gelu_backward(grad_out, x)?, vec![]),
            (Layer::Tanh, Cache::Input(x)) => (tanh_backward(grad_out, x)?, vec![]),
            (Layer::Flatten | Layer::Reshape(_), Cache::Shape(s)) => {
                (grad_out.clone().reshape(s).map_err(|_| stale())?, vec![])
            }
            (Layer::Linear(l), Cache::Input(x)) => {
                let (gx, gw, gb) = linear_backward(grad_out, x, l)?;
                (gx, vec![gw, gb])
            }
            (Layer::Fourier(f), Cache::None) => (f.backward(grad_out)?, vec![]),
            _ => return Err(stale()),
        })
    }
}

/// An ordered stack of layers with a fixed backward sweep.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sequential {
    pub layers: Vec<Layer>,
}

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Self {
        Sequential { layers }
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let mut x = input.clone();
        for layer in &self.layers {
            x = layer.forward(&x)?;
        }
        Ok(x)
    }

    /// Output shape after every layer, for shape conformance checks.
    pub fn shape_trace(&self, input: &Tensor) -> Result<Vec<Vec<usize>>> {
        let mut x = input.clone();
        let mut trace = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            x = layer.forward(&x)?;
            trace.push(x.shape().to_vec());
        }
        Ok(trace)
    }

    pub fn forward_cached(&self, input: &Tensor) -> Result<(Tensor, Vec<Cache>)> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for layer in &self.layers {
            let (y, c) = layer.forward_cached(&x)?;
            caches.push(c);
            x = y;
        }
        Ok((x, caches))
    }

    /// Reverse sweep. Parameter gradients come back in [`Sequential::params`]
    /// order.
    pub fn backward(&self, caches: &[Cache], grad_out: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        if caches.len() != self.layers.len() {
            return Err(Error::StaleCache("sequential"));
        }
        let mut grad = grad_out.clone();
        let mut per_layer: Vec<Vec<Tensor>> = Vec::with_capacity(self.layers.len());
        for (layer, cache) in self.layers.iter().zip(caches).rev() {
            let (gx, gp) = layer.backward(cache, &grad)?;
            per_layer.push(gp);
            grad = gx;
        }
        let grads = per_layer.into_iter().rev().flatten().collect();
        Ok((grad, grads))
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Multiply-adds of one forward pass over a single row of `row_shape`,
    /// counting only the conv, linear and Fourier layers.
    pub fn multiply_adds(&self, row_shape: &[usize]) -> Result<u64> {
        let mut shape = vec![1];
        shape.extend_from_slice(row_shape);
        let mut x = Tensor::zeros(&shape);
        let mut total = 0u64;
        for layer in &self.layers {
            let y = layer.forward(&x)?;
            total += match layer {
                Layer::Conv1d(c) => (c.weight.len() * y.shape()[2]) as u64,
                Layer::Linear(l) => l.weight.len() as u64,
                Layer::Fourier(f) => (f.input_len() * f.features()) as u64,
                _ => 0,
            };
            x = y;
        }
        Ok(total)
    }
}
