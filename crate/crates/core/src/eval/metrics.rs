use nalgebra::{Matrix3, SymmetricEigen};
use thiserror::Error;

use super::KdTree;

/// PSNR reported when the error is zero.
pub const DEFAULT_PSNR_CAP: f64 = 200.0;
pub const PEAK_DENSE: f64 = 59.70;
pub const PEAK_LIDAR: f64 = 30000.0;
const NORMAL_NEIGHBOURS: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("metric needs nonempty clouds")]
    Empty,
    #[error("{normals} normals for {points} reference points")]
    Normals { normals: usize, points: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistortionReport {
    /// Larger of the two directional mean squared errors.
    pub mse: f64,
    /// Largest nearest-neighbour distance in either direction.
    pub max_error: f64,
    pub psnr: f64,
}

/// Rate and distortion summary of one coded cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub bpp: f64,
    pub d1_psnr: f64,
    pub d2_psnr: Option<f64>,
    /// Stage-wise, residual, raw and header/framing bits per point.
    pub section_bpp: [f64; 4],
}

pub fn psnr_from_mse(mse: f64, peak: f64, cap: f64) -> f64 {
    if mse <= 0.0 {
        cap
    } else {
        (10.0 * (peak * peak / mse).log10()).min(cap)
    }
}

fn directional(from: &[[f64; 3]], to: &KdTree, mut err: impl FnMut(usize, usize) -> f64) -> (f64, f64) {
    let mut sum = 0.0;
    let mut max = 0.0f64;
    for (i, p) in from.iter().enumerate() {
        let (j, d) = to.nearest(p).expect("nonempty tree");
        let e = err(i, j);
        sum += e;
        max = max.max(d.sqrt());
    }
    (sum / from.len() as f64, max)
}

/// Point-to-point PSNR.
pub fn psnr_d1(reference: &[[f64; 3]], reconstructed: &[[f64; 3]], peak: f64) -> Result<DistortionReport, MetricError> {
    if reference.is_empty() || reconstructed.is_empty() {
        return Err(MetricError::Empty);
    }
    let (rt, xt) = (KdTree::new(reference), KdTree::new(reconstructed));
    let dist = |a: &[f64; 3], b: [f64; 3]| (0..3).map(|d| (a[d] - b[d]).powi(2)).sum::<f64>();
    let (m1, x1) = directional(reference, &xt, |i, j| dist(&reference[i], xt.point(j)));
    let (m2, x2) = directional(reconstructed, &rt, |i, j| dist(&reconstructed[i], rt.point(j)));
    let mse = m1.max(m2);
    Ok(DistortionReport { mse, max_error: x1.max(x2), psnr: psnr_from_mse(mse, peak, DEFAULT_PSNR_CAP) })
}

/// Unit normals from a plane fit to each point's 16 nearest neighbours.
pub fn estimate_normals(points: &[[f64; 3]]) -> Vec<[f64; 3]> {
    let tree = KdTree::new(points);
    points
        .iter()
        .map(|p| {
            let nb = tree.k_nearest(p, NORMAL_NEIGHBOURS);
            let n = nb.len() as f64;
            let mut mean = [0.0; 3];
            for &(i, _) in &nb {
                for d in 0..3 {
                    mean[d] += points[i][d] / n;
                }
            }
            let mut cov = Matrix3::<f64>::zeros();
            for &(i, _) in &nb {
                let v = [0, 1, 2].map(|d| points[i][d] - mean[d]);
                for r in 0..3 {
                    for c in 0..3 {
                        cov[(r, c)] += v[r] * v[c];
                    }
                }
            }
            let eig = SymmetricEigen::new(cov);
            let k = (0..3).min_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b])).expect("three");
            let v = eig.eigenvectors.column(k);
            let norm = v.norm();
            if norm > 0.0 && norm.is_finite() {
                [v[0] / norm, v[1] / norm, v[2] / norm]
            } else {
                [0.0, 0.0, 1.0]
            }
        })
        .collect()
}

/// Point-to-plane PSNR: error vectors are projected onto reference normals,
/// estimated when not given.
pub fn psnr_d2(
    reference: &[[f64; 3]],
    reconstructed: &[[f64; 3]],
    peak: f64,
    normals: Option<&[[f64; 3]]>,
) -> Result<DistortionReport, MetricError> {
    if reference.is_empty() || reconstructed.is_empty() {
        return Err(MetricError::Empty);
    }
    let owned;
    let normals = match normals {
        Some(n) if n.len() != reference.len() => {
            return Err(MetricError::Normals { normals: n.len(), points: reference.len() })
        }
        Some(n) => n,
        None => {
            owned = estimate_normals(reference);
            &owned
        }
    };
    let (rt, xt) = (KdTree::new(reference), KdTree::new(reconstructed));
    let proj = |a: &[f64; 3], b: [f64; 3], n: &[f64; 3]| (0..3).map(|d| (b[d] - a[d]) * n[d]).sum::<f64>().powi(2);
    let (m1, x1) = directional(reference, &xt, |i, j| proj(&reference[i], xt.point(j), &normals[i]));
    let (m2, x2) = directional(reconstructed, &rt, |i, j| proj(&reconstructed[i], rt.point(j), &normals[j]));
    let mse = m1.max(m2);
    Ok(DistortionReport { mse, max_error: x1.max(x2), psnr: psnr_from_mse(mse, peak, DEFAULT_PSNR_CAP) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(spacing: f64, n: usize) -> Vec<[f64; 3]> {
        let mut g = Vec::new();
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    g.push([x as f64 * spacing, y as f64 * spacing, z as f64 * spacing]);
                }
            }
        }
        g
    }

    #[test]
    fn identical_clouds_hit_the_cap() {
        let g = grid(1.0, 4);
        assert_eq!(psnr_d1(&g, &g, PEAK_DENSE).unwrap().psnr, DEFAULT_PSNR_CAP);
        assert_eq!(psnr_d2(&g, &g, PEAK_DENSE, None).unwrap().psnr, DEFAULT_PSNR_CAP);
        assert_eq!(psnr_d1(&[], &g, 1.0), Err(MetricError::Empty));
    }

    #[test]
    fn unit_shift_gives_closed_form() {
        let g = grid(4.0, 5);
        let shifted: Vec<[f64; 3]> = g.iter().map(|p| [p[0] + 1.0, p[1], p[2]]).collect();
        let r = psnr_d1(&g, &shifted, 100.0).unwrap();
        assert!((r.mse - 1.0).abs() < 1e-12);
        assert!((r.psnr - 40.0).abs() < 1e-9);
        assert!((r.max_error - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tangential_error_favours_point_to_plane() {
        let plane: Vec<[f64; 3]> = (0..400).map(|i| [(i % 20) as f64, (i / 20) as f64, 0.0]).collect();
        let moved: Vec<[f64; 3]> = plane.iter().map(|p| [p[0] + 0.3, p[1] + 0.2, p[2] + 0.01]).collect();
        let d1 = psnr_d1(&plane, &moved, PEAK_DENSE).unwrap();
        let d2 = psnr_d2(&plane, &moved, PEAK_DENSE, None).unwrap();
        assert!(d2.psnr > d1.psnr);
        let n = estimate_normals(&plane);
        assert!(n.iter().all(|v| v[2].abs() > 0.999));
        assert!(psnr_d2(&plane, &moved, 1.0, Some(&n[..3])).is_err());
    }
}
