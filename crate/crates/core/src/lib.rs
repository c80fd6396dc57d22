//! S2CFormer learned image codec.
//!
//! Blocks pair a cheap spatial-interaction operator (identity, separable
//! convolution or non-overlapping window attention) with a feed-forward
//! channel-aggregation network. The crate assembles them into analysis,
//! synthesis and hyper transforms, adds a hyperprior plus channel/checkerboard
//! context entropy model, and provides a bit-exact range-coded container,
//! a training loop and evaluation tooling (metrics, BD-rate, ERF maps,
//! FLOPs/params accounting, latency decomposition).

pub mod blocks;
pub mod codec;
pub mod config;
pub mod entropy;
pub mod error;
pub mod evaluation;
pub mod layers;
pub mod model;
pub mod params;
pub mod profile;
pub mod training;
pub mod transforms;

#[cfg(test)]
mod testutil;

pub use error::{Result, S2cError};
pub use model::{ForwardOutput, Model};
