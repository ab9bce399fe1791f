use ndarray::Array2;

use crate::Scalar;

/// Probabilities are kept inside `[2^-16, 1 - 2^-16]`, the coder's precision.
pub const PROB_FLOOR: f64 = 1.0 / 65536.0;

pub fn clamp_prob<T: Scalar>(p: T) -> T {
    p.max(T::lit(PROB_FLOOR)).min(T::lit(1.0 - PROB_FLOOR))
}

pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<T: Scalar>(logits: &Array2<T>) -> Array2<T> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// `-sum_i log2 p_i(x_i)` for 1-based `targets`, with clamped probabilities.
pub fn cross_entropy_bits<T: Scalar>(probs: &Array2<T>, targets: &[u8]) -> f64 {
    assert_eq!(probs.nrows(), targets.len());
    targets
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let p = clamp_prob(probs[[i, usize::from(t) - 1]]).to_f64_lossy();
            -p.log2()
        })
        .sum()
}

/// Binary cross-entropy in bits from logits, and its gradient. Entries
/// whose probability sits on the clamp get zero gradient.
pub fn bce_bits_from_logits<T: Scalar>(logits: &[T], targets: &[bool]) -> (f64, Vec<T>) {
    assert_eq!(logits.len(), targets.len());
    let ln2 = T::lit(std::f64::consts::LN_2);
    let lo = T::lit(PROB_FLOOR);
    let hi = T::lit(1.0 - PROB_FLOOR);
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (&z, &y) in logits.iter().zip(targets) {
        let p = sigmoid(z);
        let clamped = p < lo || p > hi;
        let pc = clamp_prob(p);
        if y {
            loss -= pc.to_f64_lossy().log2();
            grad.push(if clamped { T::zero() } else { (p - T::one()) / ln2 });
        } else {
            loss -= (T::one() - pc).to_f64_lossy().log2();
            grad.push(if clamped { T::zero() } else { p / ln2 });
        }
    }
    (loss, grad)
}

/// Softmax cross-entropy in bits over 1-based targets; returns the loss and
/// the gradient with respect to the logits.
pub fn softmax_ce_bits<T: Scalar>(logits: &Array2<T>, targets: &[u8]) -> (f64, Array2<T>) {
    let probs = softmax_rows(logits);
    let loss = cross_entropy_bits(&probs, targets);
    let ln2 = T::lit(std::f64::consts::LN_2);
    let lo = T::lit(PROB_FLOOR);
    let mut grad = probs;
    for (i, &t) in targets.iter().enumerate() {
        let k = usize::from(t) - 1;
        let mut row = grad.row_mut(i);
        if row[k] < lo {
            row.fill(T::zero());
        } else {
            row[k] -= T::one();
            row.mapv_inplace(|v| v / ln2);
        }
    }
    (loss, grad)
}
