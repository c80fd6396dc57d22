//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! Tensors are row-major and, for the image operators, laid out as
//! `(batch, channels, height, width)`. A [`Var`] wraps a tensor together with
//! the closure that propagates gradients to its parents; calling
//! [`Var::backward`] on a scalar walks the recorded graph in reverse creation
//! order and returns a [`Gradients`] table keyed by variable.
//!
//! Operations on variables that do not require gradients record nothing, so
//! inference runs through the same code paths without building a graph.

mod error;
mod graph;
pub mod linalg;
pub mod ops;
pub mod special;
mod tensor;

pub use error::TensorError;
pub use graph::{Gradients, Var};
pub use tensor::Tensor;

pub type Result<T> = std::result::Result<T, TensorError>;
