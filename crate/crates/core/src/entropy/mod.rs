//! Integer range coding of binary and 8-ary symbols, section framing and
//! fixed-width raw point packing.

mod range_coder;
mod raw;
mod section;

pub use range_coder::{Cdf8, QuantizedProb, RangeDecoder, RangeEncoder, PROB_BITS, PROB_TOTAL};
pub use raw::{read_raw_points, write_raw_points};
pub use section::{read_section, CodedSection, SECTION_FRAMING_BYTES};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EntropyError {
    #[error("coded stream exhausted at byte {0}")]
    StreamExhausted(usize),
    #[error("invalid distribution: {0}")]
    Distribution(String),
    #[error("symbol {0} out of range")]
    Symbol(u32),
    #[error("truncated section: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
}
