//! Plackett–Luce permutation likelihood, the ListMLE loss and the hybrid
//! cross-entropy + ListMLE objective.
//!
//! Every tail normalizer `log sum_{j >= i} exp(l_j)` is accumulated from the
//! back with `logaddexp`, so logits in the ±60 range stay finite. All sums are
//! carried in `f64`.

use serde::{Deserialize, Serialize};

use crate::canonical_ranks::CanonicalRanking;
use crate::error::{Error, Result};
use crate::numeric::log_softmax;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetMode {
    Full,
    Top,
    Bottom,
    TopBottom,
}

impl std::str::FromStr for SubsetMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(SubsetMode::Full),
            "top" => Ok(SubsetMode::Top),
            "bottom" => Ok(SubsetMode::Bottom),
            "top_bottom" | "top-bottom" => Ok(SubsetMode::TopBottom),
            other => Err(Error::Validation(format!("unknown subset mode {other:?}"))),
        }
    }
}

/// The rank positions a sample is trained on and the class expected at each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTarget {
    /// Strictly increasing, always starting at 0.
    pub positions: Vec<usize>,
    pub classes: Vec<usize>,
    pub mode: SubsetMode,
    pub count: usize,
}

impl RankTarget {
    /// Target over an explicit class order, positions `0..len`.
    pub fn full(classes: Vec<usize>) -> Result<Self> {
        let n = classes.len();
        let t = RankTarget { positions: (0..n).collect(), classes, mode: SubsetMode::Full, count: n };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.positions.is_empty() || self.positions[0] != 0 {
            return Err(Error::Validation("rank target must include position 0".into()));
        }
        if self.positions.len() != self.classes.len() {
            return Err(Error::Validation("positions and classes differ in length".into()));
        }
        if self.positions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation("positions must be strictly increasing".into()));
        }
        let mut seen = self.classes.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Validation("target classes must be distinct".into()));
        }
        Ok(())
    }

    pub fn true_class(&self) -> usize {
        self.classes[0]
    }

    fn gather(&self, logits: &[f64]) -> Result<Vec<f64>> {
        self.classes
            .iter()
            .map(|&c| {
                logits.get(c).copied().ok_or_else(|| {
                    Error::Validation(format!("target class {c} outside [0, {})", logits.len()))
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub total: f64,
    pub ce_part: f64,
    pub listmle_part: f64,
    pub alpha: f64,
}

/// Suffix log-normalizers: `out[i] = log sum_{j >= i} exp(xs[j])`.
fn tail_lse(xs: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; xs.len()];
    let mut acc = f64::NEG_INFINITY;
    for i in (0..xs.len()).rev() {
        acc = logaddexp(acc, xs[i]);
        out[i] = acc;
    }
    out
}

fn logaddexp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn check_finite(xs: &[f64]) -> Result<()> {
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::Validation("logits must be finite".into()));
    }
    Ok(())
}

/// Plackett–Luce probability of the order in which `logits_in_rank_order` is
/// given. With `log_space` the log-probability is returned instead.
pub fn pl_permutation_prob(logits_in_rank_order: &[f64], log_space: bool) -> Result<f64> {
    if logits_in_rank_order.is_empty() {
        return Err(Error::Validation("permutation must have at least one element".into()));
    }
    check_finite(logits_in_rank_order)?;
    let log_p = -sublist_nll(logits_in_rank_order);
    Ok(if log_space { log_p } else { log_p.exp() })
}

fn sublist_nll(sub: &[f64]) -> f64 {
    tail_lse(sub).iter().zip(sub).map(|(lse, x)| lse - x).sum()
}

/// ListMLE loss of the target sub-list. Tails are normalized over the
/// sub-list only.
pub fn listmle_loss(logits: &[f64], target: &RankTarget) -> Result<f64> {
    check_finite(logits)?;
    let sub = target.gather(logits)?;
    Ok(sublist_nll(&sub))
}

/// Gradient of [`listmle_loss`] with respect to every logit.
pub fn listmle_grad(logits: &[f64], target: &RankTarget) -> Result<Vec<f64>> {
    check_finite(logits)?;
    let sub = target.gather(logits)?;
    let mut grad = vec![0.0; logits.len()];
    accumulate_listmle_grad(&sub, &target.classes, 1.0, &mut grad);
    Ok(grad)
}

/// Adds `scale * dL/dl` into `grad`.
///
/// For the item at sub-list position `i` the derivative is
/// `sum_{t <= i} softmax_t(i) - 1`, where `softmax_t` is taken over the tail
/// starting at `t`. The running `log sum_{t <= i} exp(-lse_t)` keeps this O(m).
fn accumulate_listmle_grad(sub: &[f64], classes: &[usize], scale: f64, grad: &mut [f64]) {
    let lse = tail_lse(sub);
    let mut log_inv = f64::NEG_INFINITY;
    for (i, (&x, &class)) in sub.iter().zip(classes).enumerate() {
        log_inv = logaddexp(log_inv, -lse[i]);
        let mass = (x + log_inv).exp();
        grad[class] += scale * (mass - 1.0);
    }
}

fn ce_parts(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let ls = log_softmax(logits);
    let mut grad: Vec<f64> = ls.iter().map(|v| v.exp()).collect();
    grad[label] -= 1.0;
    (-ls[label], grad)
}

/// Cross-entropy plus `alpha` times ListMLE.
pub fn hybrid_loss(logits: &[f64], label: usize, target: &RankTarget, alpha: f64) -> Result<LossValue> {
    hybrid_loss_grad(logits, label, target, alpha).map(|(v, _)| v)
}

/// [`hybrid_loss`] together with its gradient.
pub fn hybrid_loss_grad(
    logits: &[f64],
    label: usize,
    target: &RankTarget,
    alpha: f64,
) -> Result<(LossValue, Vec<f64>)> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Validation(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    check_finite(logits)?;
    if label >= logits.len() {
        return Err(Error::Validation(format!("label {label} outside [0, {})", logits.len())));
    }
    if target.true_class() != label {
        return Err(Error::LabelMismatch { label, target: target.true_class() });
    }
    let (ce, mut grad) = ce_parts(logits, label);
    let sub = target.gather(logits)?;
    let listmle = sublist_nll(&sub);
    if alpha != 0.0 {
        accumulate_listmle_grad(&sub, &target.classes, alpha, &mut grad);
    }
    let value = LossValue { total: ce + alpha * listmle, ce_part: ce, listmle_part: listmle, alpha };
    Ok((value, grad))
}

/// Cross-entropy alone with its gradient.
pub fn cross_entropy_grad(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    check_finite(logits)?;
    if label >= logits.len() {
        return Err(Error::Validation(format!("label {label} outside [0, {})", logits.len())));
    }
    Ok(ce_parts(logits, label))
}

/// Chooses the rank positions used for training.
///
/// * `Full`: every position `0..=K`.
/// * `Top`: positions `0..N`.
/// * `Bottom`: position 0 and the lowest `N - 1` positions.
/// * `TopBottom`: the top `ceil(N/2)` positions (including 0) and the lowest
///   `floor(N/2)`; `N = 20` over `K = 99` gives `{0..9} ∪ {90..99}`.
pub fn select_rank_subset(canonical: &CanonicalRanking, mode: SubsetMode, n: usize) -> Result<RankTarget> {
    let total = canonical.permutation.len();
    let k = total - 1;
    if mode != SubsetMode::Full && (n == 0 || n > total) {
        return Err(Error::Validation(format!("subset size {n} outside [1, {total}]")));
    }
    let positions: Vec<usize> = match mode {
        SubsetMode::Full => (0..total).collect(),
        SubsetMode::Top => (0..n).collect(),
        SubsetMode::Bottom => std::iter::once(0).chain(k + 2 - n..=k).collect(),
        SubsetMode::TopBottom => {
            let top = n.div_ceil(2);
            let bottom = n / 2;
            (0..top).chain(k + 1 - bottom..=k).collect()
        }
    };
    let count = if mode == SubsetMode::Full { total } else { n };
    let classes = positions.iter().map(|&p| canonical.permutation[p]).collect();
    let target = RankTarget { positions, classes, mode, count };
    target.validate()?;
    Ok(target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for i in 0..=p.len() {
                let mut q = p.clone();
                q.insert(i, n - 1);
                out.push(q);
            }
        }
        out
    }

    fn canon(perm: Vec<usize>) -> CanonicalRanking {
        CanonicalRanking { predicted_class: perm[0], permutation: perm, objective_value: 0.0, support_count: 1 }
    }

    #[test]
    fn single_element_probability_is_one() {
        assert_eq!(pl_permutation_prob(&[3.7], false).unwrap(), 1.0);
        assert!(pl_permutation_prob(&[], false).is_err());
    }

    #[test]
    fn equal_logits_uniform() {
        let p = pl_permutation_prob(&[0.4; 3], false).unwrap();
        assert!((p - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn sums_to_one_over_permutations() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let logits: Vec<f64> = (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let total: f64 = permutations(4)
            .iter()
            .map(|p| {
                let ordered: Vec<f64> = p.iter().map(|&i| logits[i]).collect();
                pl_permutation_prob(&ordered, false).unwrap()
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn listmle_values() {
        let t1 = RankTarget::full(vec![0]).unwrap();
        assert_eq!(listmle_loss(&[2.0, 1.0], &t1).unwrap(), 0.0);
        let t3 = RankTarget::full(vec![0, 1, 2]).unwrap();
        assert!((listmle_loss(&[0.5; 3], &t3).unwrap() - 6f64.ln()).abs() < 1e-12);
        let t2 = RankTarget::full(vec![0, 1]).unwrap();
        // Independent scalar form: -(1 - log(e + 1)) - (0 - 0).
        let expected = -(1.0 - (1f64.exp() + 1.0).ln());
        assert!((listmle_loss(&[1.0, 0.0], &t2).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.313_261_687_518_222_8).abs() < 1e-15);
    }

    #[test]
    fn listmle_matches_neg_log_prob_on_sublist() {
        let logits = [0.3, -1.2, 2.2, 0.9, -0.4];
        let target = RankTarget {
            positions: vec![0, 2, 4],
            classes: vec![2, 0, 4],
            mode: SubsetMode::Top,
            count: 3,
        };
        let loss = listmle_loss(&logits, &target).unwrap();
        let lp = pl_permutation_prob(&[2.2, 0.3, -0.4], true).unwrap();
        assert!((loss + lp).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_class() {
        let t = RankTarget::full(vec![0, 5]).unwrap();
        assert!(listmle_loss(&[0.0, 1.0], &t).is_err());
        assert!(listmle_grad(&[0.0, 1.0], &t).is_err());
    }

    #[test]
    fn grad_simple_cases() {
        let t1 = RankTarget::full(vec![1]).unwrap();
        assert_eq!(listmle_grad(&[0.1, 0.2, 0.3], &t1).unwrap(), vec![0.0; 3]);
        let t3 = RankTarget::full(vec![0, 1, 2]).unwrap();
        let g = listmle_grad(&[0.0; 3], &t3).unwrap();
        assert!((g[0] + 2.0 / 3.0).abs() < 1e-15);
        // Position 1: 1/3 + 1/2 - 1; position 2: 1/3 + 1/2 + 1 - 1.
        assert!((g[1] + 1.0 / 6.0).abs() < 1e-15);
        assert!((g[2] - 5.0 / 6.0).abs() < 1e-15);
        assert!(g.iter().sum::<f64>().abs() < 1e-15);
    }

    fn fd_check(logits: &[f64], target: &RankTarget) -> f64 {
        let g = listmle_grad(logits, target).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for c in 0..logits.len() {
            let mut up = logits.to_vec();
            let mut dn = logits.to_vec();
            up[c] += h;
            dn[c] -= h;
            let fd = (listmle_loss(&up, target).unwrap() - listmle_loss(&dn, target).unwrap()) / (2.0 * h);
            let rel = (fd - g[c]).abs() / g[c].abs().max(fd.abs()).max(1.0);
            worst = worst.max(rel);
        }
        worst
    }

    #[test]
    fn grad_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let c = 10;
            let logits: Vec<f64> = (0..c).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let mut order: Vec<usize> = (0..c).collect();
            for i in (1..c).rev() {
                order.swap(i, rng.gen_range(0..=i));
            }
            let target = select_rank_subset(&canon(order), SubsetMode::TopBottom, 6).unwrap();
            assert!(fd_check(&logits, &target) <= 1e-5);
        }
    }

    #[test]
    fn hybrid_values() {
        let t = RankTarget::full(vec![0, 1]).unwrap();
        let v = hybrid_loss(&[0.0, 0.0], 0, &t, 1.0).unwrap();
        assert!((v.ce_part - 2f64.ln()).abs() < 1e-15);
        assert!((v.listmle_part - 2f64.ln()).abs() < 1e-15);
        assert!((v.total - 2.0 * 2f64.ln()).abs() < 1e-15);

        let logits = [1.3, -0.2, 0.7];
        let t = RankTarget::full(vec![2, 0, 1]).unwrap();
        let (v0, g0) = hybrid_loss_grad(&logits, 2, &t, 0.0).unwrap();
        let (ce, gce) = cross_entropy_grad(&logits, 2).unwrap();
        assert_eq!(v0.total, ce);
        assert_eq!(g0, gce);

        let (v, g) = hybrid_loss_grad(&logits, 2, &t, 0.8).unwrap();
        assert!((v.total - (v.ce_part + 0.8 * v.listmle_part)).abs() < 1e-12);
        let gl = listmle_grad(&logits, &t).unwrap();
        for c in 0..3 {
            assert!((g[c] - (gce[c] + 0.8 * gl[c])).abs() < 1e-15);
        }
        assert!(matches!(hybrid_loss(&logits, 0, &t, 1.0), Err(Error::LabelMismatch { .. })));
        assert!(hybrid_loss(&logits, 2, &t, -1.0).is_err());
    }

    #[test]
    fn subset_selection() {
        let c10 = canon((0..10).collect());
        let full = select_rank_subset(&c10, SubsetMode::Top, 10).unwrap();
        assert_eq!(full.positions, (0..10).collect::<Vec<_>>());
        assert_eq!(select_rank_subset(&c10, SubsetMode::Full, 0).unwrap().positions, full.positions);
        assert_eq!(select_rank_subset(&c10, SubsetMode::Bottom, 3).unwrap().positions, vec![0, 8, 9]);
        assert_eq!(select_rank_subset(&c10, SubsetMode::Bottom, 1).unwrap().positions, vec![0]);

        let c100 = canon((0..100).rev().collect());
        let tb = select_rank_subset(&c100, SubsetMode::TopBottom, 20).unwrap();
        let want: Vec<usize> = (0..10).chain(90..100).collect();
        assert_eq!(tb.positions, want);
        assert_eq!(tb.classes[0], 99);
        assert_eq!(tb.classes[19], 0);

        assert!(select_rank_subset(&c10, SubsetMode::Top, 11).is_err());
        assert!(select_rank_subset(&c10, SubsetMode::TopBottom, 0).is_err());
    }

    #[test]
    fn large_logits_stay_finite() {
        let logits = [53.72f64, -4.18, -58.33];
        let t = RankTarget::full(vec![0, 1, 2]).unwrap();
        let l = listmle_loss(&logits, &t).unwrap();
        assert!(l.is_finite() && l >= 0.0 && l < 1e-20);
        let l = listmle_loss(&[-58.33, 53.72, -4.18], &t).unwrap();
        assert!((l - (53.72 + 58.33)).abs() < 1e-6);
        assert!(listmle_grad(&[900.0, -900.0, 0.0], &t).unwrap().iter().all(|g| g.is_finite()));
    }

    proptest! {
        #[test]
        fn shift_invariant_and_non_negative(
            logits in proptest::collection::vec(-20.0f64..20.0, 2..12),
            shift in -50.0f64..50.0,
        ) {
            let n = logits.len();
            let t = RankTarget::full((0..n).rev().collect()).unwrap();
            let a = listmle_loss(&logits, &t).unwrap();
            let shifted: Vec<f64> = logits.iter().map(|x| x + shift).collect();
            let b = listmle_loss(&shifted, &t).unwrap();
            prop_assert!(a >= 0.0);
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn descending_sort_minimizes_loss(logits in proptest::collection::vec(-5.0f64..5.0, 2..6)) {
            let n = logits.len();
            let mut sorted: Vec<usize> = (0..n).collect();
            sorted.sort_by(|&a, &b| logits[b].partial_cmp(&logits[a]).unwrap());
            let best = permutations(n)
                .into_iter()
                .min_by(|a, b| {
                    let la = listmle_loss(&logits, &RankTarget::full(a.clone()).unwrap()).unwrap();
                    let lb = listmle_loss(&logits, &RankTarget::full(b.clone()).unwrap()).unwrap();
                    la.partial_cmp(&lb).unwrap()
                })
                .unwrap();
            let distinct = (0..n).all(|i| (0..i).all(|j| logits[i] != logits[j]));
            if distinct {
                prop_assert_eq!(best, sorted);
            }
        }
    }
}
