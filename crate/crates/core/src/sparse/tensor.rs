use std::sync::Arc;

use ndarray::Array2;

use super::SparseError;
use crate::geometry::Coord;

/// Features of occupied voxels; row `i` belongs to `coords[i]`.
///
/// Coordinates are shared: tensors derived within one level point at the
/// same coordinate list.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseTensor<T> {
    coords: Arc<[Coord]>,
    features: Array2<T>,
}

impl<T: Clone> SparseTensor<T> {
    pub fn new(coords: Arc<[Coord]>, features: Array2<T>) -> Result<Self, SparseError> {
        if coords.len() != features.nrows() {
            return Err(SparseError::Shape(format!(
                "{} coordinates but {} feature rows",
                coords.len(),
                features.nrows()
            )));
        }
        Ok(Self { coords, features })
    }

    pub fn filled(coords: Arc<[Coord]>, channels: usize, value: T) -> Self {
        let n = coords.len();
        Self { coords, features: Array2::from_elem((n, channels), value) }
    }

    /// New tensor on the same coordinates.
    pub fn with_features(&self, features: Array2<T>) -> Result<Self, SparseError> {
        Self::new(self.coords.clone(), features)
    }

    pub fn coords(&self) -> &Arc<[Coord]> {
        &self.coords
    }

    pub fn features(&self) -> &Array2<T> {
        &self.features
    }

    pub fn features_mut(&mut self) -> &mut Array2<T> {
        &mut self.features
    }

    pub fn into_features(self) -> Array2<T> {
        self.features
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.features.ncols()
    }

    pub fn same_coords(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.coords, &other.coords) || self.coords == other.coords
    }
}
