use std::cell::RefCell;
use std::sync::Arc;

use rustc_hash::FxHashMap;

use super::SparseError;
use crate::geometry::{morton_key, Coord};

/// Offsets of a `k x k x k` window in lexicographic `(dx, dy, dz)` order.
pub fn kernel_offsets(kernel_size: usize) -> Vec<[i32; 3]> {
    let r = (kernel_size / 2) as i32;
    let mut out = Vec::with_capacity(kernel_size.pow(3));
    for dx in -r..=r {
        for dy in -r..=r {
            for dz in -r..=r {
                out.push([dx, dy, dz]);
            }
        }
    }
    out
}

/// Gather/scatter pairs `(in, out)` per kernel offset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KernelMap {
    pub kernel_size: usize,
    pub dilation: u32,
    pub n_in: usize,
    pub n_out: usize,
    pub offsets: Vec<[i32; 3]>,
    pub pairs: Vec<Vec<(u32, u32)>>,
}

impl KernelMap {
    pub fn volume(&self) -> usize {
        self.offsets.len()
    }

    pub fn pair_count(&self) -> usize {
        self.pairs.iter().map(Vec::len).sum()
    }
}

/// Lists `(i, j)` under offset `o` iff `coords_in[i] + dilation * o == coords_out[j]`.
pub fn build_kernel_map(
    coords_in: &[Coord],
    coords_out: &[Coord],
    kernel_size: usize,
    dilation: u32,
) -> Result<KernelMap, SparseError> {
    if kernel_size % 2 == 0 || dilation == 0 {
        return Err(SparseError::Kernel { size: kernel_size, dilation });
    }
    let mut index: FxHashMap<u64, u32> = FxHashMap::default();
    index.reserve(coords_out.len());
    for (j, &c) in coords_out.iter().enumerate() {
        index.insert(morton_key(c), j as u32);
    }
    let offsets = kernel_offsets(kernel_size);
    let dil = dilation as i64;
    let pairs = offsets
        .iter()
        .map(|o| {
            let mut list = Vec::new();
            for (i, c) in coords_in.iter().enumerate() {
                let mut t = [0u32; 3];
                let mut valid = true;
                for d in 0..3 {
                    let v = i64::from(c[d]) + dil * i64::from(o[d]);
                    if !(0..1 << 21).contains(&v) {
                        valid = false;
                        break;
                    }
                    t[d] = v as u32;
                }
                if valid {
                    if let Some(&j) = index.get(&morton_key(t)) {
                        list.push((i as u32, j));
                    }
                }
            }
            list
        })
        .collect();
    Ok(KernelMap {
        kernel_size,
        dilation,
        n_in: coords_in.len(),
        n_out: coords_out.len(),
        offsets,
        pairs,
    })
}

/// Kernel maps of one coordinate set, built on first use.
#[derive(Debug)]
pub struct MapCache {
    coords: Arc<[Coord]>,
    maps: RefCell<FxHashMap<(usize, u32), Arc<KernelMap>>>,
}

impl MapCache {
    pub fn new(coords: Arc<[Coord]>) -> Self {
        Self { coords, maps: RefCell::new(FxHashMap::default()) }
    }

    pub fn coords(&self) -> &Arc<[Coord]> {
        &self.coords
    }

    pub fn get(&self, kernel_size: usize, dilation: u32) -> Result<Arc<KernelMap>, SparseError> {
        if let Some(m) = self.maps.borrow().get(&(kernel_size, dilation)) {
            return Ok(m.clone());
        }
        let map = Arc::new(build_kernel_map(&self.coords, &self.coords, kernel_size, dilation)?);
        self.maps.borrow_mut().insert((kernel_size, dilation), map.clone());
        Ok(map)
    }
}
