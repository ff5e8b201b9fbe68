//! Rank Probability Matrices: for the correctly classified samples of one
//! class, the empirical distribution of which other class sits at each rank
//! of the descending logit order.
//!
//! Rank 0 is always the predicted class and is not stored. Ranks `1..=K` are
//! the columns; rows are the `C - 1` remaining classes in ascending order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{argmax, descending_order};
use crate::tensor_io::{DenseMatrix, LogitMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankProbabilityMatrix {
    pub predicted_class: usize,
    pub n_classes: usize,
    /// Number of modelled ranks `K`.
    pub ranks: usize,
    /// Candidate classes (every class except `predicted_class`), ascending.
    pub candidates: Vec<usize>,
    /// Occupancy counts, row-major `candidates.len() x ranks`.
    pub counts: Vec<u64>,
    pub support_count: u64,
}

impl RankProbabilityMatrix {
    pub fn is_empty(&self) -> bool {
        self.support_count == 0
    }

    pub fn count(&self, row: usize, rank: usize) -> u64 {
        self.counts[row * self.ranks + (rank - 1)]
    }

    /// Probability that candidate row `row` occupies `rank` (1-based).
    pub fn prob(&self, row: usize, rank: usize) -> f64 {
        if self.support_count == 0 {
            return 0.0;
        }
        self.count(row, rank) as f64 / self.support_count as f64
    }

    /// Probability for a class id rather than a row index; zero for the
    /// predicted class itself.
    pub fn prob_of_class(&self, class: usize, rank: usize) -> f64 {
        match self.candidates.binary_search(&class) {
            Ok(row) => self.prob(row, rank),
            Err(_) => 0.0,
        }
    }

    /// Dense probability rows, one per candidate.
    pub fn prob_rows(&self) -> Vec<Vec<f64>> {
        (0..self.candidates.len())
            .map(|r| (1..=self.ranks).map(|j| self.prob(r, j)).collect())
            .collect()
    }

    /// C x K matrix with the predicted class's row left at zero.
    pub fn to_dense(&self) -> DenseMatrix {
        let mut data = vec![0.0; self.n_classes * self.ranks];
        for (row, &class) in self.candidates.iter().enumerate() {
            for j in 1..=self.ranks {
                data[class * self.ranks + (j - 1)] = self.prob(row, j);
            }
        }
        DenseMatrix { rows: self.n_classes, cols: self.ranks, data }
    }

    /// CSV with columns `predicted_class,support_count,class,count_1..K,p_1..K`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("predicted_class,support_count,class");
        for j in 1..=self.ranks {
            out.push_str(&format!(",count_{j}"));
        }
        for j in 1..=self.ranks {
            out.push_str(&format!(",p_{j}"));
        }
        out.push('\n');
        for (row, class) in self.candidates.iter().enumerate() {
            out.push_str(&format!("{},{},{}", self.predicted_class, self.support_count, class));
            for j in 1..=self.ranks {
                out.push_str(&format!(",{}", self.count(row, j)));
            }
            for j in 1..=self.ranks {
                out.push_str(&format!(",{:?}", self.prob(row, j)));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str, n_classes: usize) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let head = lines.next().ok_or_else(|| Error::Format("empty RPM CSV".into()))?;
        let ncols = head.split(',').count();
        if ncols < 5 || (ncols - 3) % 2 != 0 || !head.starts_with("predicted_class,support_count,class") {
            return Err(Error::Format("unexpected RPM CSV header".into()));
        }
        let ranks = (ncols - 3) / 2;
        let parse = |s: &str| -> Result<u64> {
            s.trim().parse().map_err(|_| Error::Format(format!("bad integer {s:?} in RPM CSV")))
        };
        let mut predicted = None;
        let mut support = 0;
        let mut candidates = Vec::new();
        let mut counts = Vec::new();
        for line in lines {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != ncols {
                return Err(Error::Format("ragged RPM CSV row".into()));
            }
            let c = parse(f[0])? as usize;
            if *predicted.get_or_insert(c) != c {
                return Err(Error::Format("RPM CSV mixes predicted classes".into()));
            }
            support = parse(f[1])?;
            candidates.push(parse(f[2])? as usize);
            for v in &f[3..3 + ranks] {
                counts.push(parse(v)?);
            }
        }
        let predicted_class = predicted.ok_or_else(|| Error::Format("RPM CSV has no rows".into()))?;
        if candidates.len() + 1 != n_classes {
            return Err(Error::Validation(format!(
                "RPM CSV lists {} candidates for {n_classes} classes",
                candidates.len()
            )));
        }
        Ok(RankProbabilityMatrix {
            predicted_class,
            n_classes,
            ranks,
            candidates,
            counts,
            support_count: support,
        })
    }
}

/// A probability table given explicitly rather than tallied from samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitRpm {
    pub predicted_class: usize,
    pub candidates: Vec<usize>,
    pub ranks: usize,
    /// Row-major `candidates.len() x ranks`.
    pub probs: Vec<f64>,
    pub support_count: u64,
}

impl ExplicitRpm {
    /// Builds a matrix directly from probabilities, for callers that already
    /// hold tabulated PMFs. `support_count` only needs to be nonzero.
    pub fn new(
        predicted_class: usize,
        candidates: Vec<usize>,
        probs: &[Vec<f64>],
        support_count: u64,
    ) -> Result<Self> {
        let ranks = probs.first().map_or(0, Vec::len);
        if probs.len() != candidates.len() || probs.iter().any(|r| r.len() != ranks) {
            return Err(Error::Validation("probability table shape does not match candidates".into()));
        }
        if probs.iter().flatten().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Validation("probabilities must lie in [0, 1]".into()));
        }
        if candidates.windows(2).any(|w| w[0] >= w[1]) || candidates.contains(&predicted_class) {
            return Err(Error::Validation(
                "candidates must be ascending, distinct and exclude the predicted class".into(),
            ));
        }
        Ok(ExplicitRpm {
            predicted_class,
            candidates,
            ranks,
            probs: probs.iter().flatten().copied().collect(),
            support_count,
        })
    }
}

/// Common read access used by the assignment solvers.
pub trait RankTable {
    fn predicted_class(&self) -> usize;
    fn candidates(&self) -> &[usize];
    fn ranks(&self) -> usize;
    fn support_count(&self) -> u64;
    /// Probability of candidate row `row` at rank `rank` (1-based).
    fn p(&self, row: usize, rank: usize) -> f64;
}

impl RankTable for RankProbabilityMatrix {
    fn predicted_class(&self) -> usize {
        self.predicted_class
    }
    fn candidates(&self) -> &[usize] {
        &self.candidates
    }
    fn ranks(&self) -> usize {
        self.ranks
    }
    fn support_count(&self) -> u64 {
        self.support_count
    }
    fn p(&self, row: usize, rank: usize) -> f64 {
        self.prob(row, rank)
    }
}

impl RankTable for ExplicitRpm {
    fn predicted_class(&self) -> usize {
        self.predicted_class
    }
    fn candidates(&self) -> &[usize] {
        &self.candidates
    }
    fn ranks(&self) -> usize {
        self.ranks
    }
    fn support_count(&self) -> u64 {
        self.support_count
    }
    fn p(&self, row: usize, rank: usize) -> f64 {
        self.probs[row * self.ranks + (rank - 1)]
    }
}

/// Tallies rank occupancy over samples with `argmax == label == target_class`.
///
/// A class with no such sample yields `support_count == 0` and all-zero
/// probabilities rather than an error; downstream solvers reject it.
pub fn compute_rpm(logits: &LogitMatrix, target_class: usize, ranks: usize) -> Result<RankProbabilityMatrix> {
    let labels = logits.require_labels()?;
    let c = logits.cols();
    if target_class >= c {
        return Err(Error::Validation(format!("target class {target_class} outside [0, {c})")));
    }
    if ranks == 0 || ranks > c - 1 {
        return Err(Error::Validation(format!("K = {ranks} outside [1, {}]", c - 1)));
    }
    let candidates: Vec<usize> = (0..c).filter(|&k| k != target_class).collect();
    // Row of each class in `candidates`; the target maps to a sentinel.
    let row_of: Vec<usize> = (0..c)
        .map(|k| match k.cmp(&target_class) {
            std::cmp::Ordering::Less => k,
            std::cmp::Ordering::Equal => usize::MAX,
            std::cmp::Ordering::Greater => k - 1,
        })
        .collect();

    let mut counts = vec![0u64; candidates.len() * ranks];
    let mut support = 0u64;
    for (row, &label) in logits.iter_rows().zip(labels) {
        if label as usize != target_class || argmax(row) != target_class {
            continue;
        }
        support += 1;
        let order = descending_order(row);
        for (j, &class) in order.iter().enumerate().skip(1).take(ranks) {
            counts[row_of[class] * ranks + (j - 1)] += 1;
        }
    }
    Ok(RankProbabilityMatrix {
        predicted_class: target_class,
        n_classes: c,
        ranks,
        candidates,
        counts,
        support_count: support,
    })
}

/// One matrix per class, `K = C - 1`.
pub fn compute_all_rpms(logits: &LogitMatrix, ranks: Option<usize>) -> Result<Vec<RankProbabilityMatrix>> {
    let k = ranks.unwrap_or(logits.cols() - 1);
    (0..logits.cols()).map(|c| compute_rpm(logits, c, k)).collect()
}
