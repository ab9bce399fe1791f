use super::{child_index, child_offset, morton_key, Coord, GeometryError, PointCloud};

/// Parent voxels at `level` with one occupancy byte each; bit `k` is set
/// iff child `k` (see [`child_index`]) is occupied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelSlice {
    pub level: u8,
    pub parent_coords: Vec<Coord>,
    pub occupancy: Vec<u8>,
}

impl LevelSlice {
    pub fn len(&self) -> usize {
        self.parent_coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent_coords.is_empty()
    }
}

/// Slices Morton-sorted children at `child_level` into their parents.
pub fn build_parent_level(children: &[Coord], child_level: u8) -> Result<LevelSlice, GeometryError> {
    if children.is_empty() {
        return Err(GeometryError::EmptySlice);
    }
    if child_level == 0 {
        return Err(GeometryError::Configuration("level 0 has no parent".into()));
    }
    let mut parent_coords: Vec<Coord> = Vec::new();
    let mut occupancy: Vec<u8> = Vec::new();
    for &c in children {
        let p = c.map(|v| v >> 1);
        let bit = 1u8 << child_index(c);
        match parent_coords.last() {
            Some(&last) if last == p => *occupancy.last_mut().unwrap() |= bit,
            _ => {
                debug_assert!(parent_coords.last().map_or(true, |&l| morton_key(l) < morton_key(p)));
                parent_coords.push(p);
                occupancy.push(bit);
            }
        }
    }
    Ok(LevelSlice { level: child_level - 1, parent_coords, occupancy })
}

/// Children of every parent in `slice`, Morton-sorted.
pub fn expand_level(slice: &LevelSlice) -> Result<Vec<Coord>, GeometryError> {
    let mut out = Vec::with_capacity(slice.len() * 2);
    for (index, (p, &occ)) in slice.parent_coords.iter().zip(&slice.occupancy).enumerate() {
        if occ == 0 {
            return Err(GeometryError::CorruptSlice { index });
        }
        for k in 0..8u8 {
            if occ >> k & 1 == 1 {
                let o = child_offset(k);
                out.push([2 * p[0] + o[0], 2 * p[1] + o[1], 2 * p[2] + o[2]]);
            }
        }
    }
    Ok(out)
}

/// Distinct coordinates of a sorted cloud after dropping `bit_depth - level`
/// low bits; the result stays Morton-sorted.
pub fn coords_at_level(coords: &[Coord], bit_depth: u8, level: u8) -> Vec<Coord> {
    let shift = u32::from(bit_depth.saturating_sub(level));
    let mut out: Vec<Coord> = Vec::new();
    for c in coords {
        let s = c.map(|v| v >> shift);
        if out.last() != Some(&s) {
            out.push(s);
        }
    }
    out
}

/// Occupied voxel count at every level `1..=bit_depth`.
pub fn level_point_counts(pc: &PointCloud) -> Vec<(u8, usize)> {
    let d = pc.bit_depth();
    let keys: Vec<u64> = pc.coords().iter().map(|&c| morton_key(c)).collect();
    (1..=d)
        .map(|level| {
            let shift = 3 * u32::from(d - level);
            let mut count = 0usize;
            let mut prev = None;
            for &k in &keys {
                let s = k >> shift;
                if prev != Some(s) {
                    count += 1;
                    prev = Some(s);
                }
            }
            (level, count)
        })
        .collect()
}
