//! Canonical class rankings from Rank Probability Matrices.
//!
//! Picking one class per rank, each class at most once, so that the summed
//! occupancy probability is maximal is a rectangular assignment problem. Its
//! constraint matrix is totally unimodular, so the 0-1 program is solved
//! exactly by the Hungarian algorithm on negated profits.
//!
//! Among equally good assignments the lexicographically smallest permutation
//! wins. After the first solve, rank positions are fixed left to right: a
//! smaller class is tried at a position only if its reduced cost under the
//! current duals is zero (within tolerance), and kept only if the remaining
//! ranks can still reach the optimum.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rank_stats::RankTable;

/// Objective values within this distance are treated as ties.
pub const TIE_TOL: f64 = 1e-9;

const BRUTE_FORCE_LIMIT: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalRanking {
    pub predicted_class: usize,
    /// `permutation[0]` is the predicted class; `permutation[j]` the class at rank `j`.
    pub permutation: Vec<usize>,
    pub objective_value: f64,
    pub support_count: u64,
}

impl CanonicalRanking {
    /// Number of ranks below rank 0.
    pub fn ranks(&self) -> usize {
        self.permutation.len() - 1
    }

    pub fn is_valid(&self) -> bool {
        let mut seen = self.permutation.clone();
        seen.sort_unstable();
        seen.dedup();
        seen.len() == self.permutation.len() && self.permutation.first() == Some(&self.predicted_class)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalEntry {
    pub permutation: Vec<usize>,
    pub objective_value: f64,
    pub support_count: u64,
}

/// Canonical rankings keyed by class, serialized as
/// `{"n_classes": C, "ranks": K, "classes": {"0": {...}, ...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalTable {
    pub n_classes: usize,
    pub ranks: usize,
    pub classes: BTreeMap<usize, CanonicalEntry>,
}

impl CanonicalTable {
    pub fn from_rankings(n_classes: usize, rankings: Vec<CanonicalRanking>) -> Result<Self> {
        let ranks = rankings.first().map_or(0, CanonicalRanking::ranks);
        let mut classes = BTreeMap::new();
        for r in rankings {
            if r.ranks() != ranks {
                return Err(Error::Validation("canonical rankings differ in length".into()));
            }
            if !r.is_valid() || r.permutation.iter().any(|&c| c >= n_classes) {
                return Err(Error::Validation(format!(
                    "invalid canonical permutation for class {}",
                    r.predicted_class
                )));
            }
            classes.insert(
                r.predicted_class,
                CanonicalEntry {
                    permutation: r.permutation,
                    objective_value: r.objective_value,
                    support_count: r.support_count,
                },
            );
        }
        Ok(CanonicalTable { n_classes, ranks, classes })
    }

    pub fn permutation(&self, class: usize) -> Option<&[usize]> {
        self.classes.get(&class).map(|e| e.permutation.as_slice())
    }

    pub fn get(&self, class: usize) -> Result<CanonicalRanking> {
        let e = self.classes.get(&class).ok_or(Error::UnknownClass(class))?;
        Ok(CanonicalRanking {
            predicted_class: class,
            permutation: e.permutation.clone(),
            objective_value: e.objective_value,
            support_count: e.support_count,
        })
    }

    pub fn covers_all(&self) -> bool {
        (0..self.n_classes).all(|c| self.classes.contains_key(&c))
    }

    pub fn missing(&self) -> Vec<usize> {
        (0..self.n_classes).filter(|c| !self.classes.contains_key(c)).collect()
    }
}

/// Hungarian solution for an `n x m` cost matrix with `n <= m`.
struct Hungarian {
    row_to_col: Vec<usize>,
    cost: f64,
    /// Row potentials, 1-based (index 0 unused).
    u: Vec<f64>,
    /// Column potentials, 1-based.
    v: Vec<f64>,
}

impl Hungarian {
    fn reduced_cost(&self, cost: &[f64], m: usize, row: usize, col: usize) -> f64 {
        cost[row * m + col] - self.u[row + 1] - self.v[col + 1]
    }
}

/// Shortest-augmenting-path Hungarian method (min cost, rows fully assigned).
///
/// Unmatched columns keep a zero potential and matched ones are non-positive,
/// so `reduced_cost(i, j)` lower-bounds the loss of any assignment using `(i, j)`.
fn hungarian_min(cost: &[f64], n: usize, m: usize) -> Hungarian {
    debug_assert!(n <= m && cost.len() == n * m);
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * m + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![0; n];
    for j in 1..=m {
        if p[j] > 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    let total = row_to_col.iter().enumerate().map(|(i, &j)| cost[i * m + j]).sum();
    Hungarian { row_to_col, cost: total, u, v }
}

/// Profit table `ranks x candidates` (rank-major) for the solver.
fn profit_matrix<T: RankTable>(rpm: &T) -> Vec<f64> {
    let k = rpm.ranks();
    let m = rpm.candidates().len();
    let mut out = Vec::with_capacity(k * m);
    for j in 1..=k {
        for row in 0..m {
            out.push(rpm.p(row, j));
        }
    }
    out
}

fn check_solvable<T: RankTable>(rpm: &T) -> Result<()> {
    if rpm.support_count() == 0 {
        return Err(Error::EmptySupport { class: rpm.predicted_class() });
    }
    let k = rpm.ranks();
    let m = rpm.candidates().len();
    if k == 0 || k > m {
        return Err(Error::Infeasible { ranks: k, candidates: m });
    }
    Ok(())
}

/// Max-profit assignment of `rows` (rank indices) to `cols` (candidate
/// indices, ascending). Returns the column chosen for each row and the profit.
fn solve_sub(profit: &[f64], m: usize, rows: &[usize], cols: &[usize]) -> (Hungarian, Vec<f64>) {
    let n = rows.len();
    let w = cols.len();
    let mut cost = Vec::with_capacity(n * w);
    for &r in rows {
        for &c in cols {
            cost.push(-profit[r * m + c]);
        }
    }
    let h = if n == 0 {
        Hungarian { row_to_col: Vec::new(), cost: 0.0, u: vec![0.0], v: vec![0.0; w + 1] }
    } else {
        hungarian_min(&cost, n, w)
    };
    (h, cost)
}

/// Optimal canonical ranking via the assignment solver.
pub fn solve_assignment<T: RankTable>(rpm: &T) -> Result<CanonicalRanking> {
    check_solvable(rpm)?;
    let k = rpm.ranks();
    let m = rpm.candidates().len();
    let profit = profit_matrix(rpm);

    let all_rows: Vec<usize> = (0..k).collect();
    let all_cols: Vec<usize> = (0..m).collect();
    let optimum = -solve_sub(&profit, m, &all_rows, &all_cols).0.cost;

    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    let mut fixed_profit = 0.0;
    for j in 0..k {
        let rows: Vec<usize> = (j..k).collect();
        let cols: Vec<usize> = (0..m).filter(|c| !chosen.contains(c)).collect();
        let (h, cost) = solve_sub(&profit, m, &rows, &cols);
        let mut pick = h.row_to_col[0];
        for ci in 0..pick {
            if h.reduced_cost(&cost, cols.len(), 0, ci) > TIE_TOL {
                continue;
            }
            let rest_cols: Vec<usize> = cols.iter().copied().filter(|&c| c != cols[ci]).collect();
            let rest = -solve_sub(&profit, m, &rows[1..], &rest_cols).0.cost;
            if fixed_profit + profit[j * m + cols[ci]] + rest >= optimum - TIE_TOL {
                pick = ci;
                break;
            }
        }
        let col = cols[pick];
        fixed_profit += profit[j * m + col];
        chosen.push(col);
    }
    Ok(ranking_from(rpm, &chosen))
}

fn ranking_from<T: RankTable>(rpm: &T, chosen: &[usize]) -> CanonicalRanking {
    let candidates = rpm.candidates();
    let mut permutation = Vec::with_capacity(chosen.len() + 1);
    permutation.push(rpm.predicted_class());
    permutation.extend(chosen.iter().map(|&c| candidates[c]));
    let objective_value = chosen.iter().enumerate().map(|(j, &c)| rpm.p(c, j + 1)).sum();
    CanonicalRanking {
        predicted_class: rpm.predicted_class(),
        permutation,
        objective_value,
        support_count: rpm.support_count(),
    }
}

/// Exhaustive search over every injective rank-to-class map. Test oracle.
pub fn solve_assignment_bruteforce<T: RankTable>(rpm: &T) -> Result<CanonicalRanking> {
    let m = rpm.candidates().len();
    if m > BRUTE_FORCE_LIMIT {
        return Err(Error::BruteForceGuard(m));
    }
    check_solvable(rpm)?;
    let k = rpm.ranks();

    fn visit<T: RankTable>(
        rpm: &T,
        k: usize,
        current: &mut Vec<usize>,
        used: &mut [bool],
        value: f64,
        best: &mut Option<(f64, Vec<usize>)>,
    ) {
        if current.len() == k {
            // Enumeration runs in lexicographic order, so only a strictly
            // better value displaces an earlier permutation.
            if best.as_ref().is_none_or(|(b, _)| value > *b + TIE_TOL) {
                *best = Some((value, current.clone()));
            }
            return;
        }
        let rank = current.len() + 1;
        for c in 0..used.len() {
            if used[c] {
                continue;
            }
            used[c] = true;
            current.push(c);
            visit(rpm, k, current, used, value + rpm.p(c, rank), best);
            current.pop();
            used[c] = false;
        }
    }

    let mut best = None;
    visit(rpm, k, &mut Vec::with_capacity(k), &mut vec![false; m], 0.0, &mut best);
    let (_, chosen) = best.expect("at least one assignment exists when K <= candidates");
    Ok(ranking_from(rpm, &chosen))
}

/// Solves every class. Classes without support are reported together.
pub fn solve_all<T: RankTable>(rpms: &[T], n_classes: usize) -> Result<CanonicalTable> {
    let missing: Vec<usize> = rpms
        .iter()
        .filter(|r| r.support_count() == 0)
        .map(RankTable::predicted_class)
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingClasses(missing));
    }
    let rankings = rpms.iter().map(solve_assignment).collect::<Result<Vec<_>>>()?;
    CanonicalTable::from_rankings(n_classes, rankings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rank_stats::ExplicitRpm;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Rows are candidates, columns ranks.
    fn explicit(predicted: usize, candidates: Vec<usize>, probs: Vec<Vec<f64>>) -> ExplicitRpm {
        ExplicitRpm::new(predicted, candidates, &probs, 100).unwrap()
    }

    fn class2_block() -> ExplicitRpm {
        // Candidate classes 1, 3, 4 for predicted class 2.
        explicit(
            2,
            vec![1, 3, 4],
            vec![vec![0.80, 0.15, 0.00], vec![0.05, 0.75, 0.01], vec![0.05, 0.10, 0.99]],
        )
    }

    fn random_rpm(rng: &mut ChaCha8Rng, m: usize, k: usize) -> ExplicitRpm {
        let probs = (0..m).map(|_| (0..k).map(|_| rng.gen::<f64>()).collect()).collect();
        explicit(m, (0..m).collect(), probs)
    }

    #[test]
    fn three_candidate_block() {
        let r = solve_assignment(&class2_block()).unwrap();
        assert_eq!(r.permutation, vec![2, 1, 3, 4]);
        assert!((r.objective_value - 2.54).abs() < 1e-12);
        assert_eq!(solve_assignment_bruteforce(&class2_block()).unwrap(), r);
    }

    #[test]
    fn identity_like_forced_optimum() {
        let rpm = explicit(
            0,
            vec![1, 2, 3, 4],
            vec![
                vec![0.0, 0.0, 1.0],
                vec![1.0, 0.0, 0.0],
                vec![0.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
            ],
        );
        let r = solve_assignment(&rpm).unwrap();
        assert_eq!(r.permutation, vec![0, 2, 4, 1]);
        assert_eq!(r.objective_value, 3.0);
    }

    #[test]
    fn bruteforce_two_by_two() {
        let rpm = explicit(2, vec![0, 1], vec![vec![0.6, 0.4], vec![0.5, 0.9]]);
        let r = solve_assignment_bruteforce(&rpm).unwrap();
        assert_eq!(r.permutation, vec![2, 0, 1]);
        assert!((r.objective_value - 1.5).abs() < 1e-15);
    }

    #[test]
    fn bruteforce_single_candidate() {
        let rpm = explicit(0, vec![1], vec![vec![0.37]]);
        let r = solve_assignment_bruteforce(&rpm).unwrap();
        assert_eq!(r.permutation, vec![0, 1]);
        assert_eq!(r.objective_value, 0.37);
    }

    #[test]
    fn ties_pick_lexicographically_smallest() {
        // Every assignment scores the same.
        let rpm = explicit(0, vec![1, 2, 3], vec![vec![0.5; 2]; 3]);
        assert_eq!(solve_assignment(&rpm).unwrap().permutation, vec![0, 1, 2]);
        // All-zero column: rank 2 takes the lowest unused class.
        let rpm = explicit(0, vec![1, 2, 3], vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![1.0, 0.0]]);
        assert_eq!(solve_assignment(&rpm).unwrap().permutation, vec![0, 3, 1]);
        // Two optimal assignments: (1,2) and (2,1) both sum to 1.0.
        let rpm = explicit(0, vec![1, 2], vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
        assert_eq!(solve_assignment(&rpm).unwrap().permutation, vec![0, 1, 2]);
    }

    #[test]
    fn errors() {
        let empty = ExplicitRpm::new(0, vec![1, 2], &[vec![0.0], vec![0.0]], 0).unwrap();
        assert!(matches!(solve_assignment(&empty), Err(Error::EmptySupport { class: 0 })));
        let wide = explicit(0, vec![1, 2], vec![vec![0.1, 0.1, 0.1], vec![0.1, 0.1, 0.1]]);
        assert!(matches!(solve_assignment(&wide), Err(Error::Infeasible { ranks: 3, candidates: 2 })));
        let big = explicit(9, (0..9).collect(), vec![vec![0.1]; 9]);
        assert!(matches!(solve_assignment_bruteforce(&big), Err(Error::BruteForceGuard(9))));
    }

    #[test]
    fn matches_bruteforce_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let rpm = random_rpm(&mut rng, 6, 4);
            let fast = solve_assignment(&rpm).unwrap();
            let slow = solve_assignment_bruteforce(&rpm).unwrap();
            assert!((fast.objective_value - slow.objective_value).abs() < 1e-12);
            // Continuous random profits make the optimum unique.
            assert_eq!(fast.permutation, slow.permutation);
        }
    }

    #[test]
    fn discrete_ties_agree_with_bruteforce() {
        // Probabilities on a coarse grid produce many exact ties.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let m = rng.gen_range(1..=6);
            let k = rng.gen_range(1..=m);
            let probs = (0..m).map(|_| (0..k).map(|_| f64::from(rng.gen_range(0..3u8)) / 4.0).collect()).collect();
            let rpm = explicit(m, (0..m).collect(), probs);
            let fast = solve_assignment(&rpm).unwrap();
            let slow = solve_assignment_bruteforce(&rpm).unwrap();
            assert_eq!(fast.permutation, slow.permutation, "{rpm:?}");
        }
    }

    #[test]
    fn table_serializes_with_class_keys() {
        let r = solve_assignment(&class2_block()).unwrap();
        let mut other = r.clone();
        other.predicted_class = 1;
        other.permutation = vec![1, 2, 3, 4];
        let t = CanonicalTable::from_rankings(5, vec![r, other]).unwrap();
        let json = serde_json::to_string(&t).unwrap();
        assert!(json.contains("\"2\":{\"permutation\":[2,1,3,4]"));
        let back: CanonicalTable = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.missing(), vec![0, 3, 4]);
    }

    proptest! {
        #[test]
        fn feasible_and_scale_invariant(seed in any::<u64>(), m in 1usize..8, scale in 0.01f64..0.99) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = rng.gen_range(1..=m.min(6));
            let rpm = random_rpm(&mut rng, m, k);
            let r = solve_assignment(&rpm).unwrap();
            prop_assert!(r.is_valid());
            prop_assert_eq!(r.permutation.len(), k + 1);
            let oracle = solve_assignment_bruteforce(&rpm).unwrap();
            prop_assert!((r.objective_value - oracle.objective_value).abs() < 1e-12);

            let scaled = ExplicitRpm { probs: rpm.probs.iter().map(|p| p * scale).collect(), ..rpm.clone() };
            let rs = solve_assignment(&scaled).unwrap();
            prop_assert_eq!(&rs.permutation, &r.permutation);
            prop_assert!((rs.objective_value - scale * r.objective_value).abs() < 1e-12);
        }
    }
}
