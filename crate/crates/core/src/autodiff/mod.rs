//! Reverse-mode automatic differentiation over dense row-major arrays.
//!
//! A [`Graph`] borrows a [`ParamStore`] and records each operation as it is
//! evaluated. [`Graph::backward`] walks the tape in reverse and returns
//! gradients for trainable parameters only. Every op checks its output for
//! NaN/Inf and fails with the op name.

mod gradcheck;
mod graph;
mod real;
mod tensor;

pub use gradcheck::{grad_check, grad_check_sampled, GradCheckReport};
pub use graph::{gelu, sigmoid, Gradients, Graph, Param, ParamId, ParamStore, Var};
pub use real::Real;
pub use tensor::Tensor;
