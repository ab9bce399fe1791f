//! Learned point cloud geometry coding with space-to-channel context models.
//!
//! Low octree levels are coded by a stage-wise model that keeps the eight
//! sub-voxel occupancies of every parent in feature channels; past the
//! saturation level each point's remaining bits are coded as per-level
//! residuals by a grouped residual model, while the voxel coordinates stay
//! fixed.
//!
//! The numeric code is generic over [`Scalar`] (`f32` for coding, `f64` for
//! reference checks). The aliases below fix the scalar for the coding path.

pub mod codec;
pub mod entropy;
pub mod eval;
pub mod geometry;
pub mod grc;
pub mod nn;
pub mod scalar;
pub mod sparse;
pub mod stagewise;

pub use scalar::Scalar;

pub type SparseTensorF32 = sparse::SparseTensor<f32>;
pub type SparseTensorF64 = sparse::SparseTensor<f64>;
pub type ConvSpecF32 = sparse::ConvSpec<f32>;
pub type ParamStoreF32 = nn::ParamStore<f32>;
pub type ParamStoreF64 = nn::ParamStore<f64>;

pub type StageNetF32 = stagewise::StageNet<f32>;
pub type StageNetF64 = stagewise::StageNet<f64>;
pub type RpaNetF32 = grc::RpaNet<f32>;
pub type RpaNetF64 = grc::RpaNet<f64>;
