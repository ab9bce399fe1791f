use ndarray::Array2;

use super::{KernelMap, SparseError, SparseTensor};
use crate::Scalar;

/// Weights of one sparse convolution, laid out `[offset][in][out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvSpec<T> {
    pub kernel_size: usize,
    pub dilation: u32,
    pub in_channels: usize,
    pub out_channels: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> ConvSpec<T> {
    pub fn zeros(kernel_size: usize, dilation: u32, in_channels: usize, out_channels: usize) -> Self {
        Self {
            kernel_size,
            dilation,
            in_channels,
            out_channels,
            weights: vec![T::zero(); kernel_size.pow(3) * in_channels * out_channels],
            bias: vec![T::zero(); out_channels],
        }
    }

    pub fn volume(&self) -> usize {
        self.kernel_size.pow(3)
    }

    pub fn check(&self) -> Result<(), SparseError> {
        if self.kernel_size % 2 == 0 || self.dilation == 0 {
            return Err(SparseError::Kernel { size: self.kernel_size, dilation: self.dilation });
        }
        if self.weights.len() != self.volume() * self.in_channels * self.out_channels
            || self.bias.len() != self.out_channels
        {
            return Err(SparseError::Shape("weight buffer does not match conv shape".into()));
        }
        Ok(())
    }

    fn check_map(&self, map: &KernelMap, rows: usize) -> Result<(), SparseError> {
        self.check()?;
        if map.kernel_size != self.kernel_size || map.dilation != self.dilation {
            return Err(SparseError::Kernel { size: map.kernel_size, dilation: map.dilation });
        }
        if map.n_in != rows || map.n_out != rows {
            return Err(SparseError::Shape(format!(
                "kernel map {}->{} applied to {rows} rows",
                map.n_in, map.n_out
            )));
        }
        Ok(())
    }
}

/// Gradients of a [`ConvSpec`], same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrad<T> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

fn contiguous<T: Scalar>(a: &Array2<T>) -> std::borrow::Cow<'_, [T]> {
    match a.as_slice() {
        Some(s) => std::borrow::Cow::Borrowed(s),
        None => std::borrow::Cow::Owned(a.iter().copied().collect()),
    }
}

/// `out[j] = bias + sum_o sum_{(i,j) in map[o]} x[i] * W[o]`, accumulated
/// offset-major so every row sees a fixed summation order.
pub fn sparse_conv<T: Scalar>(
    t: &SparseTensor<T>,
    spec: &ConvSpec<T>,
    map: &KernelMap,
) -> Result<SparseTensor<T>, SparseError> {
    if t.channels() != spec.in_channels {
        return Err(SparseError::Shape(format!(
            "input has {} channels, conv expects {}",
            t.channels(),
            spec.in_channels
        )));
    }
    spec.check_map(map, t.len())?;
    let (cin, cout) = (spec.in_channels, spec.out_channels);
    let x = contiguous(t.features());
    let mut out = vec![T::zero(); t.len() * cout];
    for row in out.chunks_exact_mut(cout) {
        row.copy_from_slice(&spec.bias);
    }
    for (o, list) in map.pairs.iter().enumerate() {
        let w = &spec.weights[o * cin * cout..(o + 1) * cin * cout];
        for &(i, j) in list {
            let xi = &x[i as usize * cin..(i as usize + 1) * cin];
            let oj = &mut out[j as usize * cout..(j as usize + 1) * cout];
            for (ci, &a) in xi.iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                let wr = &w[ci * cout..(ci + 1) * cout];
                for (acc, &wv) in oj.iter_mut().zip(wr) {
                    *acc += a * wv;
                }
            }
        }
    }
    let features = Array2::from_shape_vec((t.len(), cout), out).expect("shape");
    t.with_features(features)
}

/// Exact gradients of [`sparse_conv`] with respect to input, weights and bias.
pub fn sparse_conv_backward<T: Scalar>(
    t: &SparseTensor<T>,
    spec: &ConvSpec<T>,
    map: &KernelMap,
    grad_out: &Array2<T>,
) -> Result<(Array2<T>, ConvGrad<T>), SparseError> {
    spec.check_map(map, t.len())?;
    let (cin, cout) = (spec.in_channels, spec.out_channels);
    if t.channels() != cin || grad_out.dim() != (t.len(), cout) {
        return Err(SparseError::Shape(format!(
            "grad {:?} for conv {cin}->{cout} over {} rows",
            grad_out.dim(),
            t.len()
        )));
    }
    let x = contiguous(t.features());
    let g = contiguous(grad_out);
    let mut gx = vec![T::zero(); t.len() * cin];
    let mut gw = vec![T::zero(); spec.weights.len()];
    let mut gb = vec![T::zero(); cout];
    for row in g.chunks_exact(cout) {
        for (b, &v) in gb.iter_mut().zip(row) {
            *b += v;
        }
    }
    for (o, list) in map.pairs.iter().enumerate() {
        let w = &spec.weights[o * cin * cout..(o + 1) * cin * cout];
        let gwo = &mut gw[o * cin * cout..(o + 1) * cin * cout];
        for &(i, j) in list {
            let (i, j) = (i as usize, j as usize);
            let gj = &g[j * cout..(j + 1) * cout];
            let xi = &x[i * cin..(i + 1) * cin];
            let gxi = &mut gx[i * cin..(i + 1) * cin];
            for ci in 0..cin {
                let wr = &w[ci * cout..(ci + 1) * cout];
                let mut acc = T::zero();
                for (&gv, &wv) in gj.iter().zip(wr) {
                    acc += gv * wv;
                }
                gxi[ci] += acc;
                let a = xi[ci];
                if a != T::zero() {
                    let gr = &mut gwo[ci * cout..(ci + 1) * cout];
                    for (acc, &gv) in gr.iter_mut().zip(gj) {
                        *acc += a * gv;
                    }
                }
            }
        }
    }
    Ok((
        Array2::from_shape_vec((t.len(), cin), gx).expect("shape"),
        ConvGrad { weights: gw, bias: gb },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{morton_key, Coord};
    use crate::sparse::build_kernel_map;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn random_tensor(rng: &mut ChaCha8Rng, n: usize, grid: u32, c: usize) -> SparseTensor<f64> {
        let mut coords: Vec<Coord> =
            (0..n).map(|_| [rng.gen_range(0..grid), rng.gen_range(0..grid), rng.gen_range(0..grid)]).collect();
        coords.sort_by_key(|&c| morton_key(c));
        coords.dedup();
        let f = Array2::from_shape_fn((coords.len(), c), |_| rng.gen_range(-1.0..1.0));
        SparseTensor::new(coords.into(), f).unwrap()
    }

    fn random_spec(rng: &mut ChaCha8Rng, k: usize, d: u32, cin: usize, cout: usize) -> ConvSpec<f64> {
        let mut s = ConvSpec::zeros(k, d, cin, cout);
        s.weights.iter_mut().for_each(|w| *w = rng.gen_range(-1.0..1.0));
        s.bias.iter_mut().for_each(|b| *b = rng.gen_range(-1.0..1.0));
        s
    }

    #[test]
    fn identity_kernel_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = random_tensor(&mut rng, 30, 8, 4);
        let mut spec = ConvSpec::zeros(1, 1, 4, 4);
        for c in 0..4 {
            spec.weights[c * 4 + c] = 1.0;
        }
        let map = build_kernel_map(t.coords(), t.coords(), 1, 1).unwrap();
        assert_eq!(sparse_conv(&t, &spec, &map).unwrap(), t);
    }

    #[test]
    fn isolated_voxel_sees_only_center() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let coords: Arc<[Coord]> = vec![[5, 5, 5]].into();
        let t = SparseTensor::new(coords, Array2::from_shape_vec((1, 2), vec![0.5, -2.0]).unwrap()).unwrap();
        let spec = random_spec(&mut rng, 5, 1, 2, 3);
        let map = build_kernel_map(t.coords(), t.coords(), 5, 1).unwrap();
        let out = sparse_conv(&t, &spec, &map).unwrap();
        let center = 62;
        for co in 0..3 {
            let expect = spec.bias[co] + 0.5 * spec.weights[center * 6 + co] - 2.0 * spec.weights[center * 6 + 3 + co];
            assert!((out.features()[[0, co]] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn channel_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = random_tensor(&mut rng, 5, 8, 3);
        let spec = ConvSpec::<f64>::zeros(1, 1, 4, 4);
        let map = build_kernel_map(t.coords(), t.coords(), 1, 1).unwrap();
        assert!(matches!(sparse_conv(&t, &spec, &map), Err(SparseError::Shape(_))));
        let good = ConvSpec::<f64>::zeros(1, 1, 3, 2);
        let bad_grad = Array2::zeros((t.len(), 3));
        assert!(sparse_conv_backward(&t, &good, &map, &bad_grad).is_err());
    }

    #[test]
    fn backward_zero_and_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = random_tensor(&mut rng, 40, 8, 3);
        let spec = random_spec(&mut rng, 3, 1, 3, 2);
        let map = build_kernel_map(t.coords(), t.coords(), 3, 1).unwrap();
        let (gx, gw) = sparse_conv_backward(&t, &spec, &map, &Array2::zeros((t.len(), 2))).unwrap();
        assert!(gx.iter().chain(&gw.weights).chain(&gw.bias).all(|&v| v == 0.0));

        let lin = random_spec(&mut rng, 1, 1, 3, 2);
        let map1 = build_kernel_map(t.coords(), t.coords(), 1, 1).unwrap();
        let g = Array2::from_shape_fn((t.len(), 2), |_| rng.gen_range(-1.0..1.0));
        let (_, gw) = sparse_conv_backward(&t, &lin, &map1, &g).unwrap();
        let expect = t.features().t().dot(&g);
        for ci in 0..3 {
            for co in 0..2 {
                assert!((gw.weights[ci * 2 + co] - expect[[ci, co]]).abs() < 1e-12);
            }
        }
        let sums = g.sum_axis(ndarray::Axis(0));
        assert!(gw.bias.iter().zip(sums.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
    }
}
