//! Minimal 1-D convolution / dense network kernel with manual gradients.

pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod network;
pub mod serialize;
mod tensor;

pub use gradcheck::{grad_check, GradCheckReport};
pub use layers::{conv1d_forward, dense_forward};
pub use loss::{softmax, softmax_cross_entropy};
pub use network::{
    sgd_step, sgd_step_in_place, Activation, GradientSet, LayerGrads, LayerKind, LayerParams, LayerSpec, Network,
    ParamSet, Partition,
};
pub use serialize::{decode_params, encode_params};
pub use tensor::Tensor;
