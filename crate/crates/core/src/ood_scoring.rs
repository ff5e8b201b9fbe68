//! Rank-consistency OOD score.
//!
//! A test sample is compared with the canonical ranking of its predicted
//! class. Positions whose rank-`j` class disagrees with the canonical one
//! inflate a penalty `gamma^r_i` at every position `i <= j`; the per-rank
//! logits are divided by that penalty, offset by a class-specific reference
//! profile, and summarized as a weighted sum of log-softmax terms.
//!
//! Higher scores mean more in-distribution.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::canonical_ranks::CanonicalTable;
use crate::error::{Error, Result};
use crate::numeric::{argmax, descending_order, log_softmax, nearest_rank, softmax};
use crate::tensor_io::LogitMatrix;

pub const DEFAULT_GAMMA: f64 = 1.5;
pub const DEFAULT_PERCENTILE: f64 = 0.95;
pub const RIDGE_LAMBDA: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub gamma: f64,
}

impl PenaltyConfig {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma >= 1.0 && gamma.is_finite()) {
            return Err(Error::Validation(format!("gamma must be finite and >= 1, got {gamma}")));
        }
        Ok(PenaltyConfig { gamma })
    }
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig { gamma: DEFAULT_GAMMA }
    }
}

/// Per-class reference logits `Ref[c][i]` for rank positions `0..=K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdProfile {
    pub ranks: usize,
    pub percentile: f64,
    /// Minimum number of canonically placed ranks a training sample needed
    /// to contribute.
    pub n_min_correct: usize,
    pub per_class: BTreeMap<usize, Vec<f64>>,
    /// Samples retained per class.
    pub support: BTreeMap<usize, usize>,
}

fn rank_matches(order: &[usize], perm: &[usize]) -> usize {
    (1..perm.len()).filter(|&i| order[i] == perm[i]).count()
}

/// Builds the reference profile from labelled ID logits.
pub fn build_profile(logits: &LogitMatrix, canon: &CanonicalTable, percentile: f64) -> Result<ThresholdProfile> {
    if !(percentile > 0.0 && percentile < 1.0) {
        return Err(Error::Validation(format!("percentile must lie in (0, 1), got {percentile}")));
    }
    let labels = logits.require_labels()?;
    let k = canon.ranks;
    if k + 1 > logits.cols() {
        return Err(Error::Validation("canonical table has more ranks than the logits".into()));
    }

    let mut present: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
    present.sort_unstable();
    present.dedup();
    if let Some(&c) = present.iter().find(|c| canon.permutation(**c).is_none()) {
        return Err(Error::UnknownClass(c));
    }

    // Per class: (match count, descending logit values) of each correct sample.
    let mut samples: BTreeMap<usize, Vec<(usize, Vec<f64>)>> =
        present.iter().map(|&c| (c, Vec::new())).collect();
    for (row, &label) in logits.iter_rows().zip(labels) {
        let c = label as usize;
        let order = descending_order(row);
        if order[0] != c {
            continue;
        }
        let perm = canon.permutation(c).expect("checked above");
        let values = order[..=k].iter().map(|&j| f64::from(row[j])).collect();
        samples.get_mut(&c).unwrap().push((rank_matches(&order, perm), values));
    }
    let missing: Vec<usize> = samples.iter().filter(|(_, s)| s.is_empty()).map(|(&c, _)| c).collect();
    if !missing.is_empty() {
        return Err(Error::MissingClasses(missing));
    }

    let n_min_correct = samples
        .values()
        .map(|s| s.iter().map(|(m, _)| *m).max().unwrap())
        .min()
        .unwrap_or(0);

    let mut per_class = BTreeMap::new();
    let mut support = BTreeMap::new();
    for (&c, s) in &samples {
        let kept: Vec<&Vec<f64>> = s.iter().filter(|(m, _)| *m >= n_min_correct).map(|(_, v)| v).collect();
        let idx = nearest_rank(percentile, kept.len()) - 1;
        let refs = (0..=k)
            .map(|i| {
                let mut col: Vec<f64> = kept.iter().map(|v| v[i]).collect();
                col.sort_by(f64::total_cmp);
                col[idx]
            })
            .collect();
        per_class.insert(c, refs);
        support.insert(c, kept.len());
    }
    Ok(ThresholdProfile { ranks: k, percentile, n_min_correct, per_class, support })
}

/// `delta[i] = gamma^r_i`, with `r_i` the number of positions `j >= i` whose
/// predicted class differs from the canonical class at `j`.
pub fn penalty_vector(predicted_ranking: &[usize], canonical: &[usize], gamma: f64) -> Result<Vec<f64>> {
    PenaltyConfig::new(gamma)?;
    if predicted_ranking.len() != canonical.len() {
        return Err(Error::Validation(format!(
            "ranking lengths differ: {} vs {}",
            predicted_ranking.len(),
            canonical.len()
        )));
    }
    let mut out = vec![1.0; canonical.len()];
    let mut r = 0i32;
    for i in (0..canonical.len()).rev() {
        if predicted_ranking[i] != canonical[i] {
            r += 1;
        }
        out[i] = gamma.powi(r);
    }
    Ok(out)
}

/// Per-rank features `log softmax(u)_i` for one sample, where
/// `u_i = x_i / delta_i - Ref[c][i]` and `x_i` is the rank-`i` logit.
pub fn rank_features(
    sample_logits: &[f64],
    canon: &CanonicalTable,
    profile: &ThresholdProfile,
    gamma: f64,
) -> Result<Vec<f64>> {
    if sample_logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::Validation("sample logits must be finite".into()));
    }
    let k = profile.ranks;
    if k + 1 > sample_logits.len() || canon.ranks != k {
        return Err(Error::Validation("profile, canonical table and logits disagree on K".into()));
    }
    let order = descending_order(sample_logits);
    let c = order[0];
    let perm = canon.permutation(c).ok_or(Error::UnknownClass(c))?;
    let refs = profile.per_class.get(&c).ok_or(Error::UnknownClass(c))?;
    let delta = penalty_vector(&order[..=k], perm, gamma)?;
    let u: Vec<f64> = (0..=k).map(|i| sample_logits[order[i]] / delta[i] - refs[i]).collect();
    debug_assert!((softmax(&u).iter().sum::<f64>() - 1.0).abs() < 1e-10);
    Ok(log_softmax(&u))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub r_squared: f64,
    pub residual_norm: f64,
    pub intercept: f64,
    /// Set when the design was rank-deficient and the ridge solve was used.
    pub ridge_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankWeights {
    pub w: Vec<f64>,
    pub fit_report: FitReport,
}

impl RankWeights {
    pub fn uniform(len: usize) -> Self {
        RankWeights {
            w: vec![1.0 / len as f64; len],
            fit_report: FitReport { r_squared: 0.0, residual_norm: 0.0, intercept: 0.0, ridge_fallback: false },
        }
    }
}

pub fn rankood_score(
    sample_logits: &[f64],
    canon: &CanonicalTable,
    profile: &ThresholdProfile,
    weights: &RankWeights,
    gamma: f64,
) -> Result<f64> {
    let f = rank_features(sample_logits, canon, profile, gamma)?;
    if weights.w.len() != f.len() {
        return Err(Error::Validation(format!(
            "{} weights for {} rank positions",
            weights.w.len(),
            f.len()
        )));
    }
    Ok(weights.w.iter().zip(&f).map(|(w, x)| w * x).sum())
}

/// Least squares of ID = 1 / OOD = 0 on the per-rank features, with an
/// intercept. Rank-deficient designs fall back to a ridge solve.
pub fn fit_weights(id_features: &[Vec<f64>], ood_features: &[Vec<f64>]) -> Result<RankWeights> {
    let p = id_features.first().or(ood_features.first()).map_or(0, Vec::len);
    if p == 0 {
        return Err(Error::Validation("no features to fit".into()));
    }
    if id_features.iter().chain(ood_features).any(|r| r.len() != p) {
        return Err(Error::Validation("feature rows differ in length".into()));
    }
    if id_features.is_empty() || ood_features.is_empty() {
        return Err(Error::Validation("both ID and OOD features are required".into()));
    }
    let n = id_features.len() + ood_features.len();
    if n < p + 1 {
        return Err(Error::Validation(format!("{n} rows cannot fit {p} weights and an intercept")));
    }

    let rows: Vec<&Vec<f64>> = id_features.iter().chain(ood_features).collect();
    let y: Vec<f64> = (0..n).map(|i| if i < id_features.len() { 1.0 } else { 0.0 }).collect();
    let mean_x: Vec<f64> = (0..p).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let mean_y = y.iter().sum::<f64>() / n as f64;

    let x = DMatrix::from_fn(n, p, |i, j| rows[i][j] - mean_x[j]);
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - mean_y));

    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * 1e-10 * n.max(p) as f64;
    let full_rank = smax > 0.0 && svd.singular_values.iter().all(|&s| s > tol);

    let (w, ridge_fallback) = if full_rank {
        let w = svd.solve(&yc, tol).map_err(|e| Error::Fit(e.to_string()))?;
        (w, false)
    } else {
        let xtx = x.transpose() * &x + DMatrix::identity(p, p) * RIDGE_LAMBDA;
        let chol = xtx.cholesky().ok_or_else(|| Error::Fit("ridge system is not positive definite".into()))?;
        (chol.solve(&(x.transpose() * &yc)), true)
    };
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite regression coefficients".into()));
    }

    let resid = &yc - &x * &w;
    let ss_res = resid.norm_squared();
    let ss_tot = yc.norm_squared();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 0.0 };
    let intercept = mean_y - w.iter().zip(&mean_x).map(|(a, b)| a * b).sum::<f64>();
    Ok(RankWeights {
        w: w.iter().copied().collect(),
        fit_report: FitReport { r_squared, residual_norm: ss_res.sqrt(), intercept, ridge_fallback },
    })
}

/// Maximum softmax probability.
pub fn msp_score(sample_logits: &[f64]) -> Result<f64> {
    if sample_logits.is_empty() || sample_logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::Validation("MSP needs a non-empty finite logit vector".into()));
    }
    let p = softmax(sample_logits);
    Ok(p[argmax(&p)])
}

/// Features for every row of a logit matrix.
pub fn features_for(
    logits: &LogitMatrix,
    canon: &CanonicalTable,
    profile: &ThresholdProfile,
    gamma: f64,
) -> Result<Vec<Vec<f64>>> {
    (0..logits.rows())
        .map(|i| rank_features(&logits.row_f64(i), canon, profile, gamma))
        .collect()
}
