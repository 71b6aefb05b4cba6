//! Deterministic dense tensors with tape-based reverse-mode gradients.
//!
//! Everything runs on the CPU in a fixed evaluation order, so identical
//! inputs and seeds reproduce bit-identical results on one machine.

pub mod checkpoint;
mod error;
mod float;
pub mod gradcheck;
pub mod init;
mod kernels;
pub mod optim;
mod params;
pub mod resize;
mod tape;
mod tensor;

pub use error::{NumericsError, Result};
pub use float::{gemm, Float, MatRef};
pub use gradcheck::grad_check;
pub use optim::{OptimizerConfig, OptimizerKind, OptimizerState, StepSchedule};
pub use params::{Bound, Param, Parameters};
pub use resize::bicubic_resize;
pub use tape::{Tape, Var};
pub use tensor::Tensor;
