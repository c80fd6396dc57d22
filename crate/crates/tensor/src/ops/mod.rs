//! Differentiable operators. Most are exposed as methods on [`Var`](crate::Var).

mod conv;
mod elementwise;
pub mod gradcheck;
mod norm;
mod shape;

pub use conv::{conv_out_len, conv_transpose_out_len, Conv2dOpts};
pub use shape::{reflect_index, Padding};
