//! Geometry residual coding: below a start level every occupied voxel is
//! followed by one child per level, coded as a 3-bit residual symbol
//! against the fixed start-level coordinates.

mod residual;
mod rpa;

use thiserror::Error;

use crate::entropy::EntropyError;
use crate::nn::NnError;
use crate::sparse::SparseError;

pub use residual::{
    binarize_residual, extract_residual_levels, reconstruct_coords, GroupSplit, ResidualLevels, ResidualTensor,
};
pub use rpa::{
    decode_column, decode_residuals, encode_column, encode_residuals, marginal_residual_frequencies, train_rpa, ColumnTrace, ResidualModel,
    RpaContext, RpaNet, RpaNetConfig, RpaSample,
};

#[derive(Debug, Error)]
pub enum GrcError {
    #[error("residual symbol {0} outside 1..=8")]
    Symbol(u8),
    #[error("start level {start} must be below bit depth {bit_depth}")]
    StartLevel { start: u8, bit_depth: u8 },
    #[error("residual column {column} has {got} entries for {expected} voxels")]
    Alignment { column: usize, got: usize, expected: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error(transparent)]
    Entropy(#[from] EntropyError),
}
