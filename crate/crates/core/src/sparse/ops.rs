use std::sync::Arc;

use ndarray::{concatenate, s, Array2, Axis};

use super::{SparseError, SparseTensor};
use crate::geometry::Coord;
use crate::Scalar;

pub fn relu<T: Scalar>(t: &SparseTensor<T>) -> SparseTensor<T> {
    let f = t.features().mapv(|v| if v > T::zero() { v } else { T::zero() });
    t.with_features(f).expect("same shape")
}

/// Gradient of [`relu`] given its input.
pub fn relu_backward<T: Scalar>(input: &SparseTensor<T>, grad: &Array2<T>) -> Array2<T> {
    let mut g = grad.clone();
    g.zip_mut_with(input.features(), |gv, &x| {
        if x <= T::zero() {
            *gv = T::zero();
        }
    });
    g
}

pub fn add<T: Scalar>(a: &SparseTensor<T>, b: &SparseTensor<T>) -> Result<SparseTensor<T>, SparseError> {
    if !a.same_coords(b) {
        return Err(SparseError::Alignment);
    }
    if a.channels() != b.channels() {
        return Err(SparseError::Shape(format!("add {} + {} channels", a.channels(), b.channels())));
    }
    a.with_features(a.features() + b.features())
}

/// Gradient of [`add`]: the same gradient flows to both operands.
pub fn add_backward<T: Scalar>(grad: &Array2<T>) -> (Array2<T>, Array2<T>) {
    (grad.clone(), grad.clone())
}

pub fn concat_channels<T: Scalar>(
    a: &SparseTensor<T>,
    b: &SparseTensor<T>,
) -> Result<SparseTensor<T>, SparseError> {
    if !a.same_coords(b) {
        return Err(SparseError::Alignment);
    }
    let f = concatenate(Axis(1), &[a.features().view(), b.features().view()]).expect("row counts agree");
    a.with_features(f)
}

/// Splits a concatenated gradient back at column `left_channels`.
pub fn concat_backward<T: Scalar>(grad: &Array2<T>, left_channels: usize) -> (Array2<T>, Array2<T>) {
    (
        grad.slice(s![.., ..left_channels]).to_owned(),
        grad.slice(s![.., left_channels..]).to_owned(),
    )
}

/// Overwrites rows `indices` of `t` with `rows`.
pub fn replace_rows<T: Scalar>(
    t: &SparseTensor<T>,
    indices: &[usize],
    rows: &Array2<T>,
) -> Result<SparseTensor<T>, SparseError> {
    if rows.nrows() != indices.len() || rows.ncols() != t.channels() {
        return Err(SparseError::Shape(format!(
            "{:?} replacement rows for {} indices of {} channels",
            rows.dim(),
            indices.len(),
            t.channels()
        )));
    }
    let mut f = t.features().clone();
    for (r, &i) in indices.iter().enumerate() {
        if i >= t.len() {
            return Err(SparseError::Index { index: i, len: t.len() });
        }
        f.row_mut(i).assign(&rows.row(r));
    }
    t.with_features(f)
}

/// Gradient of [`replace_rows`]: `(grad wrt t, grad wrt rows)`.
pub fn replace_rows_backward<T: Scalar>(grad: &Array2<T>, indices: &[usize]) -> (Array2<T>, Array2<T>) {
    let mut gt = grad.clone();
    let mut gr = Array2::zeros((indices.len(), grad.ncols()));
    for (r, &i) in indices.iter().enumerate() {
        gr.row_mut(r).assign(&grad.row(i));
        gt.row_mut(i).fill(T::zero());
    }
    (gt, gr)
}

/// Restricts `t` to rows `indices`, re-labelled with `coords` (the
/// coordinates of those rows, in the same order).
pub fn gather_rows<T: Scalar>(
    t: &SparseTensor<T>,
    indices: &[usize],
    coords: Arc<[Coord]>,
) -> Result<SparseTensor<T>, SparseError> {
    if coords.len() != indices.len() {
        return Err(SparseError::Shape("gather coordinate count differs from index count".into()));
    }
    for (k, &i) in indices.iter().enumerate() {
        if i >= t.len() {
            return Err(SparseError::Index { index: i, len: t.len() });
        }
        if t.coords()[i] != coords[k] {
            return Err(SparseError::Alignment);
        }
    }
    let f = t.features().select(Axis(0), indices);
    SparseTensor::new(coords, f)
}

/// Scatters a gathered gradient back to `rows` rows.
pub fn gather_rows_backward<T: Scalar>(grad: &Array2<T>, indices: &[usize], rows: usize) -> Array2<T> {
    let mut g = Array2::zeros((rows, grad.ncols()));
    for (r, &i) in indices.iter().enumerate() {
        let mut row = g.row_mut(i);
        row += &grad.row(r);
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor(vals: &[f64], c: usize) -> SparseTensor<f64> {
        let n = vals.len() / c;
        let coords: Arc<[Coord]> = (0..n as u32).map(|i| [i, 0, 0]).collect::<Vec<_>>().into();
        SparseTensor::new(coords, Array2::from_shape_vec((n, c), vals.to_vec()).unwrap()).unwrap()
    }

    #[test]
    fn relu_values() {
        let t = tensor(&[-1.0, 2.0], 1);
        assert_eq!(relu(&t).features().as_slice().unwrap(), &[0.0, 2.0]);
        let g = relu_backward(&t, &Array2::from_elem((2, 1), 1.0));
        assert_eq!(g.as_slice().unwrap(), &[0.0, 1.0]);
    }

    #[test]
    fn add_zero_and_concat() {
        let t = tensor(&[1.0, 2.0, 3.0, 4.0], 2);
        let z = t.with_features(Array2::zeros((2, 2))).unwrap();
        assert_eq!(add(&t, &z).unwrap(), t);
        let c = concat_channels(&t, &tensor(&[5.0, 6.0, 7.0, 8.0, 9.0, 0.0], 3)).unwrap();
        assert_eq!(c.channels(), 5);
        let other = SparseTensor::new(vec![[9, 9, 9], [1, 0, 0]].into(), Array2::zeros((2, 2))).unwrap();
        assert_eq!(add(&t, &other), Err(SparseError::Alignment));
        assert_eq!(concat_channels(&t, &other), Err(SparseError::Alignment));
    }

    #[test]
    fn replace_and_gather() {
        let t = tensor(&[1.0, 2.0, 3.0], 1);
        let r = replace_rows(&t, &[2], &Array2::from_elem((1, 1), 9.0)).unwrap();
        assert_eq!(r.features().as_slice().unwrap(), &[1.0, 2.0, 9.0]);
        assert!(matches!(replace_rows(&t, &[3], &Array2::zeros((1, 1))), Err(SparseError::Index { .. })));
        let (gt, gr) = replace_rows_backward(&Array2::from_elem((3, 1), 1.0), &[2]);
        assert_eq!(gt.as_slice().unwrap(), &[1.0, 1.0, 0.0]);
        assert_eq!(gr.as_slice().unwrap(), &[1.0]);

        let sub: Arc<[Coord]> = vec![[0, 0, 0], [2, 0, 0]].into();
        let g = gather_rows(&t, &[0, 2], sub).unwrap();
        assert_eq!(g.features().as_slice().unwrap(), &[1.0, 3.0]);
        let back = gather_rows_backward(&Array2::from_elem((2, 1), 1.0), &[0, 2], 3);
        assert_eq!(back.as_slice().unwrap(), &[1.0, 0.0, 1.0]);
    }
}
