use ndarray::Array2;

use super::{Grads, ParamStore};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub checked: usize,
}

fn rel_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Central differences of `loss` over the flat parameters at `indices`,
/// compared with `analytic`. Relative errors use `max(|a|, |n|, floor)`.
pub fn finite_difference_check<T: Scalar, F>(
    store: &mut ParamStore<T>,
    analytic: &Grads<T>,
    indices: &[usize],
    h: f64,
    floor: f64,
    mut loss: F,
) -> GradCheckReport
where
    F: FnMut(&ParamStore<T>) -> f64,
{
    let mut report = GradCheckReport { max_rel_error: 0.0, worst_index: 0, checked: 0 };
    for &idx in indices {
        let orig = store.flat_get(idx);
        store.flat_set(idx, orig + T::lit(h));
        let plus = loss(store);
        store.flat_set(idx, orig - T::lit(h));
        let minus = loss(store);
        store.flat_set(idx, orig);
        let numeric = (plus - minus) / (2.0 * h);
        let err = rel_error(analytic.flat_get(idx).to_f64_lossy(), numeric, floor);
        report.checked += 1;
        if err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst_index = idx;
        }
    }
    report
}

/// Same check for gradients with respect to an input feature matrix.
pub fn input_gradient_check<T: Scalar, F>(
    input: &Array2<T>,
    analytic: &Array2<T>,
    entries: &[(usize, usize)],
    h: f64,
    floor: f64,
    mut loss: F,
) -> GradCheckReport
where
    F: FnMut(&Array2<T>) -> f64,
{
    let mut x = input.clone();
    let mut report = GradCheckReport { max_rel_error: 0.0, worst_index: 0, checked: 0 };
    for (n, &(r, c)) in entries.iter().enumerate() {
        let orig = x[[r, c]];
        x[[r, c]] = orig + T::lit(h);
        let plus = loss(&x);
        x[[r, c]] = orig - T::lit(h);
        let minus = loss(&x);
        x[[r, c]] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let err = rel_error(analytic[[r, c]].to_f64_lossy(), numeric, floor);
        report.checked += 1;
        if err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst_index = n;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Conv;
    use crate::sparse::{MapCache, SparseTensor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_layer_double_precision() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut store = ParamStore::<f64>::new();
        let conv = Conv::create(&mut store, "lin", 1, 1, 3, 4, &mut rng).unwrap();
        let coords: std::sync::Arc<[_]> = (0..10u32).map(|i| [i, 0, 0]).collect::<Vec<_>>().into();
        let maps = MapCache::new(coords.clone());
        let x = SparseTensor::new(coords, Array2::from_shape_fn((10, 3), |_| rng.gen_range(-1.0..1.0))).unwrap();
        let r = Array2::from_shape_fn((10, 4), |_| rng.gen_range(-1.0..1.0));
        let loss = |s: &ParamStore<f64>| {
            let out = conv.infer(s, &maps, &x).unwrap();
            (out.features() * &r).sum()
        };
        let (_, cache) = conv.forward(&store, &maps, &x).unwrap();
        let mut grads = store.zero_grads();
        let gx = conv.backward(&store, &maps, &cache, &r, &mut grads).unwrap();
        let all: Vec<usize> = (0..store.param_count()).collect();
        let rep = finite_difference_check(&mut store, &grads, &all, 1e-6, 1e-8, loss);
        assert!(rep.max_rel_error <= 1e-6, "{rep:?}");
        let entries: Vec<(usize, usize)> = (0..10).flat_map(|i| (0..3).map(move |c| (i, c))).collect();
        let rep = input_gradient_check(x.features(), &gx, &entries, 1e-6, 1e-8, |f| {
            let t = x.with_features(f.clone()).unwrap();
            (conv.infer(&store, &maps, &t).unwrap().features() * &r).sum()
        });
        assert!(rep.max_rel_error <= 1e-6, "{rep:?}");
    }
}
