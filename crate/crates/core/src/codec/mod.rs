//! End-to-end coding: stage-wise octree levels down to a start level,
//! residual chains below it, and the leftover points written raw.

mod config;
mod header;
mod stream;
mod synthetic;
mod train;

use thiserror::Error;

use crate::entropy::EntropyError;
use crate::geometry::GeometryError;
use crate::grc::GrcError;
use crate::nn::NnError;
use crate::stagewise::StageError;

pub use config::{CodecConfig, Mode};
pub use header::{Header, HEADER_MAGIC, HEADER_VERSION};
pub use stream::{
    decode, encode, encode_points, select_start_level, CodecModels, Decoded, Encoded, LevelBits, StreamReport,
    StreamTrace,
};
pub use synthetic::{generate_synthetic_cloud, generate_synthetic_points, voxelize, SyntheticKind};
pub use train::{residual_samples, stage_slices, train_grc, train_stagewise};

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("incompatible stream: {0}")]
    Incompatible(String),
    #[error("corrupt stream: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Stage(#[from] StageError),
    #[error(transparent)]
    Grc(#[from] GrcError),
    #[error(transparent)]
    Entropy(#[from] EntropyError),
    #[error(transparent)]
    Nn(#[from] NnError),
}
