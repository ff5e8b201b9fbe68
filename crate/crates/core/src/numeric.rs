//! Small shared numeric kernels.

/// `log(sum(exp(xs)))` with max subtraction. Returns `-inf` for an empty slice.
pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

pub(crate) fn log_softmax(xs: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(xs);
    xs.iter().map(|&x| x - lse).collect()
}

pub(crate) fn softmax(xs: &[f64]) -> Vec<f64> {
    log_softmax(xs).into_iter().map(f64::exp).collect()
}

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax<T: PartialOrd + Copy>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Class indices sorted by descending value; ties go to the lowest index.
pub(crate) fn descending_order<T: PartialOrd + Copy>(xs: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| {
        xs[b]
            .partial_cmp(&xs[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx
}

/// One-based nearest-rank index `ceil(p * n)`, clamped to `[1, n]`.
///
/// The small slack keeps products like `0.95 * 20` from rounding up past the
/// intended order statistic.
pub(crate) fn nearest_rank(p: f64, n: usize) -> usize {
    let k = (p * n as f64 - 1e-9).ceil();
    (k.max(1.0) as usize).min(n)
}
