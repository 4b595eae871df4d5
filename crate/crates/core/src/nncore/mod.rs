//! Dense tensors, hand-differentiated layers and the Adagrad optimizer.
//!
//! Every layer exposes a `*_forward` function and a matching `*_backward`
//! function. Backward functions take the forward input (and, where cheaper,
//! the forward output) rather than hidden caches, so networks built on top
//! keep their own activations.

mod checkpoint;
mod conv;
pub mod gradcheck;
mod layers;
mod params;
mod real;
mod tensor;

pub use checkpoint::Checkpoint;
pub use conv::{
    conv2d_backward, conv2d_forward, conv_output_size, deconv2d_backward, deconv2d_forward, deconv_output_size,
};
pub use layers::{
    activation, activation_backward, dropout, dropout_backward, fc_backward, fc_forward, global_average_pool,
    global_average_pool_backward, softmax, softmax_backward, Activation,
};
pub use params::{LayerGrads, LayerParams, TrainSchedule, ADAGRAD_EPS};
pub use real::{gemm, MatRef, Real};
pub use tensor::Tensor;
