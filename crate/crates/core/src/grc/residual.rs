use std::sync::Arc;

use super::GrcError;
use crate::geometry::{child_index, morton_key, Coord, PointCloud};

/// Bits of `r - 1` as `(x, y, z)`, x most significant.
pub fn binarize_residual(r: u8) -> Result<[u32; 3], GrcError> {
    if !(1..=8).contains(&r) {
        return Err(GrcError::Symbol(r));
    }
    let v = u32::from(r - 1);
    Ok([v >> 2 & 1, v >> 1 & 1, v & 1])
}

/// Start-level coordinates refined by `columns.len()` residual columns.
pub fn reconstruct_coords(base: &[Coord], columns: &[Vec<u8>]) -> Result<Vec<Coord>, GrcError> {
    for (n, col) in columns.iter().enumerate() {
        if col.len() != base.len() {
            return Err(GrcError::Alignment { column: n, got: col.len(), expected: base.len() });
        }
    }
    let mut out = base.to_vec();
    for col in columns {
        for (c, &r) in out.iter_mut().zip(col) {
            let b = binarize_residual(r)?;
            for d in 0..3 {
                c[d] = 2 * c[d] + b[d];
            }
        }
    }
    Ok(out)
}

/// Fixed start-level coordinates with one residual column per finer level.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualTensor {
    coords: Arc<[Coord]>,
    columns: Vec<Vec<u8>>,
}

impl ResidualTensor {
    pub fn new(coords: Arc<[Coord]>) -> Self {
        Self { coords, columns: Vec::new() }
    }

    pub fn coords(&self) -> &Arc<[Coord]> {
        &self.coords
    }

    pub fn columns(&self) -> &[Vec<u8>] {
        &self.columns
    }

    pub fn push_column(&mut self, column: Vec<u8>) -> Result<(), GrcError> {
        if column.len() != self.coords.len() {
            return Err(GrcError::Alignment { column: self.columns.len(), got: column.len(), expected: self.coords.len() });
        }
        if let Some(&bad) = column.iter().find(|r| !(1..=8).contains(*r)) {
            return Err(GrcError::Symbol(bad));
        }
        self.columns.push(column);
        Ok(())
    }
}

/// Output of [`extract_residual_levels`].
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualLevels {
    pub base: Vec<Coord>,
    pub columns: Vec<Vec<u8>>,
    pub extras: Vec<Coord>,
}

/// Splits a cloud into start-level voxels, one residual chain per voxel
/// following its smallest-Morton descendant, and the leftover points.
pub fn extract_residual_levels(pc: &PointCloud, start_level: u8) -> Result<ResidualLevels, GrcError> {
    let depth = pc.bit_depth();
    if start_level >= depth {
        return Err(GrcError::StartLevel { start: start_level, bit_depth: depth });
    }
    let m = usize::from(depth - start_level);
    let shift = u32::from(depth - start_level);
    let mut base = Vec::new();
    let mut columns = vec![Vec::new(); m];
    let mut extras = Vec::new();
    let mut last: Option<Coord> = None;
    // coords are Morton-sorted, so descendants of one voxel are contiguous
    for &p in pc.coords() {
        let anc = [p[0] >> shift, p[1] >> shift, p[2] >> shift];
        if last == Some(anc) {
            extras.push(p);
            continue;
        }
        last = Some(anc);
        base.push(anc);
        for (n, col) in columns.iter_mut().enumerate() {
            let s = shift - 1 - n as u32;
            col.push(child_index([p[0] >> s, p[1] >> s, p[2] >> s]) + 1);
        }
    }
    Ok(ResidualLevels { base, columns, extras })
}

/// Even Morton positions form group 1 and are coded first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupSplit {
    pub group1: Vec<usize>,
    pub group2: Vec<usize>,
}

impl GroupSplit {
    /// `coords` must be Morton-sorted.
    pub fn new(coords: &[Coord]) -> Self {
        debug_assert!(coords.windows(2).all(|w| morton_key(w[0]) < morton_key(w[1])));
        let group1 = (0..coords.len()).step_by(2).collect();
        let group2 = (1..coords.len()).step_by(2).collect();
        Self { group1, group2 }
    }
}
