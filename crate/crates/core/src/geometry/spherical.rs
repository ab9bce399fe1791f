use crate::Scalar;

use super::{Coord, GeometryError, PointCloud};

/// Uniform quantizer for `(rho, theta, phi)`: cell `q` covers
/// `[offset + step*q, offset + step*(q+1))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantParams {
    pub step: [f64; 3],
    pub offset: [f64; 3],
}

impl QuantParams {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.step.iter().all(|s| s.is_finite() && *s > 0.0) && self.offset.iter().all(|o| o.is_finite()) {
            Ok(())
        } else {
            Err(GeometryError::Quantization(format!("{self:?}")))
        }
    }

    /// Per-dimension minimum as offset and `range / 2^bit_depth` as step.
    pub fn fit<T: Scalar>(spherical: &[[T; 3]], bit_depth: u8) -> Self {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in spherical {
            for d in 0..3 {
                let v = p[d].to_f64_lossy();
                lo[d] = lo[d].min(v);
                hi[d] = hi[d].max(v);
            }
        }
        let cells = f64::from(1u32 << bit_depth);
        let mut step = [1.0; 3];
        let mut offset = [0.0; 3];
        for d in 0..3 {
            if lo[d].is_finite() {
                offset[d] = lo[d];
                let range = hi[d] - lo[d];
                if range > 0.0 {
                    step[d] = range / cells;
                }
            }
        }
        Self { step, offset }
    }

    fn quantize(&self, v: [f64; 3], bit_depth: u8) -> Coord {
        let max = f64::from((1u32 << bit_depth) - 1);
        let mut q = [0u32; 3];
        for d in 0..3 {
            let cell = ((v[d] - self.offset[d]) / self.step[d]).floor();
            q[d] = cell.clamp(0.0, max) as u32;
        }
        q
    }

    fn dequantize(&self, q: Coord) -> [f64; 3] {
        let mut v = [0.0; 3];
        for d in 0..3 {
            v[d] = self.offset[d] + self.step[d] * (f64::from(q[d]) + 0.5);
        }
        v
    }
}

/// `(rho, theta, phi)` of a Cartesian point: radial distance, polar angle
/// from +z, and azimuth via two-argument arctangent. Both angles are 0 where
/// they are undefined.
pub fn to_spherical_real<T: Scalar>(p: [T; 3]) -> [T; 3] {
    let [x, y, z] = p;
    let rho = (x * x + y * y + z * z).sqrt();
    let theta = if rho > T::zero() {
        (z / rho).max(-T::one()).min(T::one()).acos()
    } else {
        T::zero()
    };
    let phi = if x == T::zero() && y == T::zero() { T::zero() } else { y.atan2(x) };
    [rho, theta, phi]
}

fn from_spherical_real(s: [f64; 3]) -> [f64; 3] {
    let [rho, theta, phi] = s;
    if rho <= 0.0 {
        return [0.0; 3];
    }
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    [rho * st * cp, rho * st * sp, rho * ct]
}

/// Quantizes Cartesian points into a deduplicated spherical cloud.
pub fn cart_to_spherical<T: Scalar>(
    points: &[[T; 3]],
    params: QuantParams,
    bit_depth: u8,
) -> Result<PointCloud, GeometryError> {
    params.validate()?;
    if bit_depth == 0 || bit_depth > super::MAX_BIT_DEPTH {
        return Err(GeometryError::BitDepth(bit_depth));
    }
    let coords = points
        .iter()
        .map(|&p| {
            let s = to_spherical_real(p).map(Scalar::to_f64_lossy);
            params.quantize(s, bit_depth)
        })
        .collect();
    PointCloud::spherical(coords, bit_depth, params)
}

/// Cell-center reconstruction of a spherical cloud in Cartesian space.
pub fn spherical_to_cart<T: Scalar>(pc: &PointCloud) -> Result<Vec<[T; 3]>, GeometryError> {
    let params = pc
        .quant_params()
        .ok_or_else(|| GeometryError::Configuration("missing quantization parameters".into()))?;
    Ok(pc
        .coords()
        .iter()
        .map(|&q| from_spherical_real(params.dequantize(q)).map(T::lit))
        .collect())
}
