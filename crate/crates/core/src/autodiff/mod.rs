//! Reverse-mode differentiation over dense `f64` matrices.

mod adam;
mod check;
mod graph;
mod tensor;

pub use adam::AdamState;
pub use check::{grad_check, grad_check_sampled, REL_ERROR_FLOOR};
pub use graph::{softmax_rows, ComputeGraph, Var};
pub use tensor::{Matrix, ParamId, ParamStore, Tensor};
