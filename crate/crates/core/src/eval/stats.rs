use std::fmt::Write;

use crate::codec::StreamReport;
use crate::geometry::{cart_to_spherical, level_point_counts, to_spherical_real, GeometryError, PointCloud, QuantParams};

use crate::codec::voxelize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelStat {
    pub level: u8,
    pub count_cart: usize,
    pub count_spher: usize,
    pub bits_level: Option<u64>,
}

/// Integer-valued points inside the grid are used as they are; anything
/// else is scaled into the grid by its bounding cube.
pub fn cloud_from_points(points: &[[f64; 3]], bit_depth: u8) -> Result<PointCloud, GeometryError> {
    let limit = f64::from(1u32 << bit_depth);
    if points.iter().all(|p| p.iter().all(|v| v.fract() == 0.0 && *v >= 0.0 && *v < limit)) {
        return PointCloud::new(points.iter().map(|p| p.map(|v| v as u32)).collect(), bit_depth);
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for d in 0..3 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let side = (0..3).map(|d| hi[d] - lo[d]).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let unit: Vec<[f64; 3]> = points.iter().map(|p| [0, 1, 2].map(|d| (p[d] - lo[d]) / side * 2.0 - 1.0)).collect();
    voxelize(&unit, bit_depth)
}

/// Occupied voxels per level in Cartesian space and in spherical space
/// (around the origin), with coded bits per level when a stream is given.
pub fn level_stats(
    points: &[[f64; 3]],
    bit_depth: u8,
    stream: Option<&StreamReport>,
) -> Result<Vec<LevelStat>, GeometryError> {
    let cart = cloud_from_points(points, bit_depth)?;
    let sph: Vec<[f64; 3]> = points.iter().map(|&p| to_spherical_real(p)).collect();
    let spher = cart_to_spherical(points, QuantParams::fit(&sph, bit_depth), bit_depth)?;
    let cc = level_point_counts(&cart);
    let sc = level_point_counts(&spher);
    Ok(cc
        .iter()
        .zip(&sc)
        .map(|(&(level, count_cart), &(_, count_spher))| LevelStat {
            level,
            count_cart,
            count_spher,
            bits_level: stream.map(|s| s.levels.iter().filter(|l| l.level == level).map(|l| l.total()).sum()),
        })
        .collect())
}

/// CSV with header `level,count_cart,count_spher,bits_level`.
pub fn stats_csv(rows: &[LevelStat]) -> String {
    let mut out = String::from("level,count_cart,count_spher,bits_level\n");
    for r in rows {
        let bits = r.bits_level.map(|b| b.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{},{}", r.level, r.count_cart, r.count_spher, bits).expect("string write");
    }
    out
}
