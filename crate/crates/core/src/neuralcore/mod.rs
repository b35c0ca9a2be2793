//! Minimal differentiable numerics for the sampler network.
//!
//! Everything here works on caller-owned buffers in double precision. Each
//! forward operation has an exact reverse-mode counterpart; [`gradcheck`]
//! verifies them against central finite differences.

mod activation;
mod adam;
pub mod checkpoint;
mod conv;
mod gemm;
pub mod gradcheck;
mod pool;
mod tensor;

pub use activation::{relu_backward, relu_forward};
pub use adam::{adam_step, AdamState};
pub use checkpoint::{Checkpoint, NamedTensor};
pub use conv::{conv1d_backward, conv1d_forward, ConvGrads, ConvLayer};
pub use gradcheck::{grad_check, grad_check_piecewise, GradCheckOptions, GradCheckReport};
pub use pool::{downsample2, downsample2_backward, upsample2, upsample2_backward, Downsampled};
pub use tensor::Tensor1D;
