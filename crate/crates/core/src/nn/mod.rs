//! Minimal dense-tensor engine: the layers the three autoencoders need, their
//! exact gradients, MSE loss and Adam.

pub mod activation;
pub mod adam;
pub mod conv;
pub mod fourier;
mod gemm;
pub mod gradcheck;
pub mod init;
pub mod layer;
pub mod linear;
pub mod loss;
pub mod pool;
pub mod tensor;

pub use activation::{gelu, gelu_derivative, tanh_derivative};
pub use adam::{AdamConfig, AdamState};
pub use conv::{conv1d_backward, conv1d_forward, Conv1d};
pub use fourier::{fourier_lowpass_features, FourierLowpass};
pub use layer::{Cache, Layer, Sequential};
pub use linear::{linear_backward, linear_forward, Linear};
pub use loss::{mse_grad, mse_loss};
pub use pool::{maxpool1d_backward, maxpool1d_forward, MaxPool1d};
pub use tensor::Tensor;
