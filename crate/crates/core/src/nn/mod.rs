//! Dense tensors, reverse-mode differentiation, layers and optimizer.
//!
//! Activations use NHWC layout; convolutions run as im2col + GEMM.

mod adam;
mod gradcheck;
mod layers;
mod tape;
mod tensor;

pub use adam::{clip_global_norm, AdamConfig, AdamOutcome, AdamState};
pub use gradcheck::{grad_check, relative_error, GradCheckReport, Probe};
pub use layers::{
    scaled_normal, BatchNorm, Conv2d, LayerNorm, Linear, Mode, ParamSet, RunningStats, BN_MOMENTUM, RELU_GAIN,
};
pub use tape::{col2im, conv_output_size, im2col, BatchStats, ConvGeom, Tape, Var, NORM_EPS};
pub use tensor::{matmul, Scalar, Tensor};
