//! A minimal tensor engine with hand-derived backward passes.
//!
//! Everything is generic over [`Scalar`] so the same code runs in `f32` for
//! training and in `f64` for finite-difference checks.

mod activation;
mod conv;
mod dense;
mod params;
mod pool;
mod scalar;
mod tensor;

pub use activation::{
    cross_entropy_loss, dropout, dropout_backward, relu, relu_backward, softmax, softmax_cross_entropy_backward,
};
pub use conv::{conv2d_backward, conv2d_forward, conv2d_param_grads, Conv2dGrads};
pub use dense::{dense_backward, dense_forward, DenseGrads};
pub use params::{l2_penalty, LayerParams, Sgd, SgdConfig};
pub use pool::{maxpool_backward, maxpool_forward, PoolIndices};
pub use scalar::Scalar;
pub use tensor::Tensor;
