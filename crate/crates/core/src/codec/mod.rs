//! Bitstream coding: range coder, probability tables and the `.s2c` container.

pub mod container;
pub mod pipeline;
pub mod range_coder;
pub mod tables;

use thiserror::Error;

pub use container::{CompressedObject, Header};
pub use pipeline::{assemble_slice, compress, decompress, CodingTrace, Decoded, Encoded};
pub use range_coder::{range_decode, range_encode, CdfTable, RangeDecoder, RangeEncoder};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodingError {
    #[error("symbol {symbol} outside alphabet of size {alphabet}")]
    SymbolOutOfRange { symbol: usize, alphabet: usize },
    #[error("invalid probability table: {0}")]
    InvalidTable(String),
    #[error("stream truncated")]
    Truncated,
    #[error("{0} unexpected trailing bytes")]
    TrailingData(usize),
    #[error("corrupt stream: {0}")]
    Corrupt(String),
}
