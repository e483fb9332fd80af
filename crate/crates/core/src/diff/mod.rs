//! Minimal reverse-mode automatic differentiation over dense tensors.

mod conv;
mod gradcheck;
mod graph;
mod tensor;

pub use gradcheck::{grad_check, GradCheck, GradCheckReport};
pub use graph::{Activation, Binary, Graph, Var};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
