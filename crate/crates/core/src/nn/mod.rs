//! Small fixed menu of differentiable layers, parameter storage and Adam.

mod adam;
pub mod gradcheck;
pub mod layers;
mod mat;
mod params;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{finite_diff_check, input_diff_check, relative_error};
pub use layers::{
    apply_bn_updates, cross_entropy, pool, pool_backward, relu, relu_backward, softmax,
    softmax_cross_entropy_grad, BatchNorm, BnUpdate, Conv1d, Dense, LstmCell, Mode, Pooling,
    LOG_CLAMP,
};
pub use mat::{gemm, Mat};
pub use params::{Grads, Init, ParamId, ParamStore, Tensor};
