/// Static 3-d tree over real points. Ties in distance resolve to the
/// smaller point index.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<[f64; 3]>,
    // permutation of point indices; node = median of a slice
    order: Vec<usize>,
}

fn d2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

fn better(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

impl KdTree {
    pub fn new(points: &[[f64; 3]]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        build(points, &mut order, 0);
        Self { points: points.to_vec(), order }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> [f64; 3] {
        self.points[i]
    }

    /// Index and squared distance of the nearest point.
    pub fn nearest(&self, q: &[f64; 3]) -> Option<(usize, f64)> {
        let mut best = (f64::INFINITY, usize::MAX);
        self.search_nearest(q, 0, self.order.len(), 0, &mut best);
        (best.1 != usize::MAX).then_some((best.1, best.0))
    }

    fn search_nearest(&self, q: &[f64; 3], lo: usize, hi: usize, axis: usize, best: &mut (f64, usize)) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let i = self.order[mid];
        let p = &self.points[i];
        let cand = (d2(p, q), i);
        if better(cand, *best) {
            *best = cand;
        }
        let diff = q[axis] - p[axis];
        let (first, second) = if diff < 0.0 { ((lo, mid), (mid + 1, hi)) } else { ((mid + 1, hi), (lo, mid)) };
        let next = (axis + 1) % 3;
        self.search_nearest(q, first.0, first.1, next, best);
        if diff * diff <= best.0 {
            self.search_nearest(q, second.0, second.1, next, best);
        }
    }

    /// The `k` nearest points sorted by distance, as `(index, squared distance)`.
    pub fn k_nearest(&self, q: &[f64; 3], k: usize) -> Vec<(usize, f64)> {
        let mut heap: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        if k > 0 {
            self.search_k(q, 0, self.order.len(), 0, k, &mut heap);
        }
        heap.into_iter().map(|(d, i)| (i, d)).collect()
    }

    fn search_k(&self, q: &[f64; 3], lo: usize, hi: usize, axis: usize, k: usize, found: &mut Vec<(f64, usize)>) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let i = self.order[mid];
        let p = &self.points[i];
        let cand = (d2(p, q), i);
        if found.len() < k || better(cand, *found.last().expect("nonempty")) {
            let at = found.partition_point(|&f| better(f, cand));
            found.insert(at, cand);
            found.truncate(k);
        }
        let diff = q[axis] - p[axis];
        let (first, second) = if diff < 0.0 { ((lo, mid), (mid + 1, hi)) } else { ((mid + 1, hi), (lo, mid)) };
        let next = (axis + 1) % 3;
        self.search_k(q, first.0, first.1, next, k, found);
        if found.len() < k || diff * diff <= found.last().expect("nonempty").0 {
            self.search_k(q, second.0, second.1, next, k, found);
        }
    }
}

fn build(points: &[[f64; 3]], order: &mut [usize], axis: usize) {
    if order.len() <= 1 {
        return;
    }
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b)));
    let (left, right) = order.split_at_mut(mid);
    build(points, left, (axis + 1) % 3);
    build(points, &mut right[1..], (axis + 1) % 3);
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(points: &[[f64; 3]], q: &[f64; 3]) -> Vec<(usize, f64)> {
        let mut all: Vec<(usize, f64)> = points.iter().enumerate().map(|(i, p)| (i, d2(p, q))).collect();
        all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        all
    }

    #[test]
    fn ties_prefer_lower_index() {
        let pts = [[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let t = KdTree::new(&pts);
        assert_eq!(t.nearest(&[0.0, 0.0, 0.0]), Some((0, 1.0)));
        assert!(KdTree::new(&[]).nearest(&[0.0; 3]).is_none());
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            pts in prop::collection::vec((0i32..20, 0i32..20, 0i32..20), 1..150),
            q in (0i32..20, 0i32..20, 0i32..20),
            k in 1usize..20,
        ) {
            let pts: Vec<[f64; 3]> = pts.iter().map(|&(x, y, z)| [x as f64, y as f64, z as f64]).collect();
            let q = [q.0 as f64, q.1 as f64, q.2 as f64];
            let t = KdTree::new(&pts);
            let b = brute(&pts, &q);
            prop_assert_eq!(t.nearest(&q), Some(b[0]));
            let kn = t.k_nearest(&q, k);
            prop_assert_eq!(&kn[..], &b[..k.min(b.len())]);
        }
    }
}
