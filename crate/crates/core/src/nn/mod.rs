//! Network blocks with explicit forward caches and backward passes.

mod blocks;
mod checkpoint;
mod gradcheck;
mod loss;
mod optim;
mod params;

pub use blocks::{Conv, ConvCache, Dfa, DfaCache, Head, HeadCache, HeadKind, Irn, IrnCache};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, Record, CHECKPOINT_MAGIC};
pub use gradcheck::{finite_difference_check, input_gradient_check, GradCheckReport};
pub use loss::{
    bce_bits_from_logits, clamp_prob, cross_entropy_bits, sigmoid, softmax_ce_bits, softmax_rows,
    PROB_FLOOR,
};
pub use optim::{Adam, AdamConfig, LrSchedule, TrainConfig, TrainLog};
pub use params::{Grads, ParamStore};

use thiserror::Error;

use crate::sparse::SparseError;

#[derive(Debug, Error)]
pub enum NnError {
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("unknown layer path {0}")]
    UnknownLayer(String),
    #[error("non-finite gradient in layer {0}")]
    NonFinite(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
