//! Dense tensors, reverse-mode autodiff, optimizers, and gradient checks.

mod gradcheck;
mod graph;
mod params;
mod tensor;

pub use gradcheck::{grad_check, max_relative_error, numeric_gradient, relative_error};
pub use graph::{Graph, NodeId};
pub use params::{clip_global_norm, Bound, Optimizer, OptimizerKind, ParamRef, ParamStore};
pub use tensor::Tensor;
