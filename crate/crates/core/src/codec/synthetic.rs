//! Deterministic test clouds in the cube `[-1, 1)^3`.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::CodecError;
use crate::geometry::{Coord, GeometryError, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    Plane,
    Sphere,
    /// Rotating scanner at the origin: fixed elevation rings, azimuth sweep,
    /// ground plane and surrounding walls, small range noise.
    LidarRings,
    UniformRandom,
}

impl FromStr for SyntheticKind {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plane" => Ok(Self::Plane),
            "sphere" => Ok(Self::Sphere),
            "lidar_rings" => Ok(Self::LidarRings),
            "uniform_random" => Ok(Self::UniformRandom),
            other => Err(CodecError::Config(format!("unknown synthetic kind {other:?}"))),
        }
    }
}

const RINGS: usize = 32;

fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    v.map(|x| x / n)
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn random_direction(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let z: f64 = rng.gen_range(-1.0..1.0);
    let a: f64 = rng.gen_range(0.0..2.0 * PI);
    let r = (1.0 - z * z).sqrt();
    [r * a.cos(), r * a.sin(), z]
}

fn inside(p: &[f64; 3]) -> bool {
    p.iter().all(|v| (-1.0..1.0).contains(v))
}

/// `n` real-valued points of the given kind.
pub fn generate_synthetic_points(kind: SyntheticKind, seed: u64, n: usize) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    match kind {
        SyntheticKind::UniformRandom => {
            for _ in 0..n {
                out.push([rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
            }
        }
        SyntheticKind::Plane => {
            let normal = random_direction(&mut rng);
            let helper = if normal[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
            let e1 = unit(cross(normal, helper));
            let e2 = cross(normal, e1);
            let c: [f64; 3] = [rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2)];
            while out.len() < n {
                let (u, v): (f64, f64) = (rng.gen_range(-0.7..0.7), rng.gen_range(-0.7..0.7));
                let p = [0, 1, 2].map(|d| c[d] + u * e1[d] + v * e2[d]);
                if inside(&p) {
                    out.push(p);
                }
            }
        }
        SyntheticKind::Sphere => {
            let r = rng.gen_range(0.5..0.8);
            for _ in 0..n {
                out.push(random_direction(&mut rng).map(|v| v * r));
            }
        }
        SyntheticKind::LidarRings => {
            let height = rng.gen_range(0.04..0.06);
            let sectors: Vec<f64> = (0..16).map(|_| rng.gen_range(0.45..0.9)).collect();
            let per_ring = n.div_ceil(RINGS).max(1);
            let phase: f64 = rng.gen_range(0.0..2.0 * PI);
            'scan: for ring in 0..RINGS {
                let elevation = (-25.0 + 28.0 * ring as f64 / (RINGS - 1) as f64).to_radians();
                for k in 0..per_ring {
                    if out.len() == n {
                        break 'scan;
                    }
                    let az = phase + 2.0 * PI * k as f64 / per_ring as f64;
                    let dir = [elevation.cos() * az.cos(), elevation.cos() * az.sin(), elevation.sin()];
                    let sector = ((az.rem_euclid(2.0 * PI)) / (2.0 * PI) * sectors.len() as f64) as usize;
                    let wall = sectors[sector.min(sectors.len() - 1)];
                    // axis-aligned square wall of half-width `wall`
                    let horiz = dir[0].abs().max(dir[1].abs());
                    let mut range = wall / horiz;
                    if dir[2] < 0.0 {
                        range = range.min(height / -dir[2]);
                    }
                    range *= 1.0 + rng.gen_range(-0.002..0.002);
                    let p = dir.map(|v| (v * range).clamp(-0.999, 0.999));
                    out.push(p);
                }
            }
        }
    }
    out
}

/// Quantizes `[-1, 1)^3` onto the `2^bit_depth` grid.
pub fn voxelize(points: &[[f64; 3]], bit_depth: u8) -> Result<PointCloud, GeometryError> {
    let cells = f64::from(1u32 << bit_depth);
    let coords: Vec<Coord> = points
        .iter()
        .map(|p| p.map(|v| ((v + 1.0) * 0.5 * cells).floor().clamp(0.0, cells - 1.0) as u32))
        .collect();
    PointCloud::new(coords, bit_depth)
}

/// Voxelized synthetic cloud; duplicates collapse, so it may hold fewer
/// than `n` points.
pub fn generate_synthetic_cloud(kind: SyntheticKind, seed: u64, n: usize, bit_depth: u8) -> Result<PointCloud, CodecError> {
    Ok(voxelize(&generate_synthetic_points(kind, seed, n), bit_depth)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{cart_to_spherical, to_spherical_real, QuantParams};
    use crate::codec::select_start_level;

    #[test]
    fn deterministic() {
        for kind in [SyntheticKind::Plane, SyntheticKind::Sphere, SyntheticKind::LidarRings, SyntheticKind::UniformRandom] {
            let a = generate_synthetic_cloud(kind, 9, 2000, 8).unwrap();
            let b = generate_synthetic_cloud(kind, 9, 2000, 8).unwrap();
            assert_eq!(a, b);
            assert!(!a.is_empty());
            assert_ne!(a, generate_synthetic_cloud(kind, 10, 2000, 8).unwrap());
        }
    }

    #[test]
    fn plane_points_lie_within_one_voxel() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // same first draws as the generator
        let normal = random_direction(&mut rng);
        let c = [rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2)];
        let pts = generate_synthetic_points(SyntheticKind::Plane, 3, 3000);
        let pc = voxelize(&pts, 8).unwrap();
        let voxel = 2.0 / 256.0;
        let near = pc
            .coords()
            .iter()
            .filter(|q| {
                let p = q.map(|v| (f64::from(v) + 0.5) * voxel - 1.0);
                let d: f64 = (0..3).map(|k| (p[k] - c[k]) * normal[k]).sum();
                d.abs() <= voxel
            })
            .count();
        assert!(near as f64 >= 0.95 * pc.len() as f64);
    }

    #[test]
    fn lidar_saturates_earlier_in_spherical_space() {
        let pts = generate_synthetic_points(SyntheticKind::LidarRings, 1, 20_000);
        let cart = voxelize(&pts, 12).unwrap();
        let sph: Vec<[f64; 3]> = pts.iter().map(|&p| to_spherical_real(p)).collect();
        let spher = cart_to_spherical(&pts, QuantParams::fit(&sph, 12), 12).unwrap();
        let (jc, js) = (select_start_level(&cart, 0.99), select_start_level(&spher, 0.99));
        assert!(js < jc, "spherical {js} cartesian {jc}");
    }
}
