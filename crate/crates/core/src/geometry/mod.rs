//! Integer point clouds, Morton ordering, octree bit-slicing and the
//! spherical coordinate transform.

mod morton;
mod octree;
mod spherical;

pub use morton::{child_index, child_offset, morton_decode, morton_encode, morton_key};
pub use octree::{build_parent_level, coords_at_level, expand_level, level_point_counts, LevelSlice};
pub use spherical::{cart_to_spherical, spherical_to_cart, to_spherical_real, QuantParams};

use thiserror::Error;

/// Integer voxel coordinate `(x, y, z)`.
pub type Coord = [u32; 3];

/// Largest bit depth a [`PointCloud`] may carry.
pub const MAX_BIT_DEPTH: u8 = 18;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("coordinate component {value} out of range for bit depth {bit_depth}")]
    OutOfRange { value: u64, bit_depth: u8 },
    #[error("unsupported bit depth {0}")]
    BitDepth(u8),
    #[error("empty level slice")]
    EmptySlice,
    #[error("corrupt level slice: parent {index} has zero occupancy")]
    CorruptSlice { index: usize },
    #[error("invalid quantization parameters: {0}")]
    Quantization(String),
    #[error("configuration error: {0}")]
    Configuration(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordSystem {
    Cartesian,
    Spherical,
}

/// Deduplicated, Morton-sorted integer point cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    coords: Vec<Coord>,
    bit_depth: u8,
    system: CoordSystem,
    spherical: Option<QuantParams>,
}

impl PointCloud {
    /// Builds a Cartesian cloud; input order and duplicates are irrelevant.
    pub fn new(coords: Vec<Coord>, bit_depth: u8) -> Result<Self, GeometryError> {
        Self::with_system(coords, bit_depth, CoordSystem::Cartesian, None)
    }

    pub fn spherical(
        coords: Vec<Coord>,
        bit_depth: u8,
        params: QuantParams,
    ) -> Result<Self, GeometryError> {
        Self::with_system(coords, bit_depth, CoordSystem::Spherical, Some(params))
    }

    fn with_system(
        mut coords: Vec<Coord>,
        bit_depth: u8,
        system: CoordSystem,
        spherical: Option<QuantParams>,
    ) -> Result<Self, GeometryError> {
        if bit_depth == 0 || bit_depth > MAX_BIT_DEPTH {
            return Err(GeometryError::BitDepth(bit_depth));
        }
        match (system, &spherical) {
            (CoordSystem::Spherical, None) => {
                return Err(GeometryError::Configuration(
                    "spherical cloud requires quantization parameters".into(),
                ))
            }
            (CoordSystem::Cartesian, Some(_)) => {
                return Err(GeometryError::Configuration(
                    "cartesian cloud cannot carry quantization parameters".into(),
                ))
            }
            (_, Some(p)) => p.validate()?,
            _ => {}
        }
        let limit = 1u64 << bit_depth;
        for c in &coords {
            for &v in c {
                if u64::from(v) >= limit {
                    return Err(GeometryError::OutOfRange { value: v.into(), bit_depth });
                }
            }
        }
        coords.sort_unstable_by_key(|c| morton_key(*c));
        coords.dedup();
        Ok(Self { coords, bit_depth, system, spherical })
    }

    pub fn coords(&self) -> &[Coord] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<Coord> {
        self.coords
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn bit_depth(&self) -> u8 {
        self.bit_depth
    }

    pub fn system(&self) -> CoordSystem {
        self.system
    }

    pub fn quant_params(&self) -> Option<&QuantParams> {
        self.spherical.as_ref()
    }
}
