//! Detection metrics and rank-structure diagnostics.
//!
//! Scores follow one orientation throughout: higher means more
//! in-distribution. AUROC gives half credit to ties; the TPR threshold uses
//! `>=` on both the ID and OOD side.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::canonical_ranks::CanonicalTable;
use crate::error::{Error, Result};
use crate::numeric::{argmax, descending_order, nearest_rank};
use crate::tensor_io::LogitMatrix;

fn check_scores(name: &str, xs: &[f64]) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::Validation(format!("{name} scores are empty")));
    }
    if xs.iter().any(|x| x.is_nan()) {
        return Err(Error::Validation(format!("{name} scores contain NaN")));
    }
    Ok(())
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// `P(id > ood) + 0.5 * P(id == ood)`.
pub fn auroc(id_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    check_scores("ID", id_scores)?;
    check_scores("OOD", ood_scores)?;
    let ood = sorted(ood_scores);
    // Twice the Mann–Whitney U, kept integral so the result is exact.
    let mut twice_u: u128 = 0;
    for &s in id_scores {
        let below = ood.partition_point(|&o| o < s);
        let at_or_below = ood.partition_point(|&o| o <= s);
        twice_u += 2 * below as u128 + (at_or_below - below) as u128;
    }
    let pairs = 2 * id_scores.len() as u128 * ood_scores.len() as u128;
    Ok(twice_u as f64 / pairs as f64)
}

/// False-positive rate at the threshold that keeps at least `tpr` of the ID
/// scores. Returns `(fpr, threshold)`.
pub fn fpr_at_tpr(id_scores: &[f64], ood_scores: &[f64], tpr: f64) -> Result<(f64, f64)> {
    check_scores("ID", id_scores)?;
    check_scores("OOD", ood_scores)?;
    if !(tpr > 0.0 && tpr <= 1.0) {
        return Err(Error::Validation(format!("tpr must lie in (0, 1], got {tpr}")));
    }
    let mut id = sorted(id_scores);
    id.reverse();
    let k = nearest_rank(tpr, id.len());
    let threshold = id[k - 1];
    let above = ood_scores.iter().filter(|&&o| o >= threshold).count();
    Ok((above as f64 / ood_scores.len() as f64, threshold))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub detector_name: String,
    pub id_scores: Vec<f64>,
    pub ood_scores: Vec<f64>,
    pub auroc: f64,
    pub fpr95: f64,
    pub threshold_at_tpr95: f64,
}

impl ScoreReport {
    pub fn new(detector_name: impl Into<String>, id_scores: Vec<f64>, ood_scores: Vec<f64>) -> Result<Self> {
        let auroc = auroc(&id_scores, &ood_scores)?;
        let (fpr95, threshold) = fpr_at_tpr(&id_scores, &ood_scores, 0.95)?;
        Ok(ScoreReport {
            detector_name: detector_name.into(),
            id_scores,
            ood_scores,
            auroc,
            fpr95,
            threshold_at_tpr95: threshold,
        })
    }

    /// The compact JSON form: `{detector, n_id, n_ood, auroc, fpr95, threshold, config_echo}`.
    pub fn summary(&self, config_echo: serde_json::Value) -> ReportSummary {
        ReportSummary {
            detector: self.detector_name.clone(),
            n_id: self.id_scores.len(),
            n_ood: self.ood_scores.len(),
            auroc: self.auroc,
            fpr95: self.fpr95,
            threshold: self.threshold_at_tpr95,
            config_echo,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub detector: String,
    pub n_id: usize,
    pub n_ood: usize,
    pub auroc: f64,
    pub fpr95: f64,
    pub threshold: f64,
    pub config_echo: serde_json::Value,
}

/// `per_class[c][i - 1] = P(rank i correct | ranks 1..i-1 correct)` among
/// samples predicted as `c`; `None` where the conditioning set is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpMatrix {
    pub ranks: usize,
    pub per_class: BTreeMap<usize, Vec<Option<f64>>>,
    pub numerators: BTreeMap<usize, Vec<u64>>,
    pub denominators: BTreeMap<usize, Vec<u64>>,
}

impl CpMatrix {
    /// Mean over all defined entries.
    pub fn mean_entry(&self) -> Option<f64> {
        let defined: Vec<f64> = self.per_class.values().flatten().filter_map(|v| *v).collect();
        (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("class");
        for i in 1..=self.ranks {
            out.push_str(&format!(",rank_{i}"));
        }
        out.push('\n');
        for (class, row) in &self.per_class {
            out.push_str(&class.to_string());
            for v in row {
                match v {
                    Some(p) => out.push_str(&format!(",{p:?}")),
                    None => out.push_str(",NA"),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Conditional rank-correctness matrix for every class present in `canon`.
pub fn cp_matrix(logits: &LogitMatrix, canon: &CanonicalTable) -> Result<CpMatrix> {
    let k = canon.ranks;
    if k + 1 > logits.cols() {
        return Err(Error::Validation(format!(
            "canonical table has {k} ranks but logits have {} classes",
            logits.cols()
        )));
    }
    let mut numerators: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
    let mut denominators: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
    for &c in canon.classes.keys() {
        numerators.insert(c, vec![0; k]);
        denominators.insert(c, vec![0; k]);
    }
    for row in logits.iter_rows() {
        let order = descending_order(row);
        let pred = order[0];
        let Some(perm) = canon.permutation(pred) else { continue };
        let num = numerators.get_mut(&pred).unwrap();
        let den = denominators.get_mut(&pred).unwrap();
        for i in 1..=k {
            den[i - 1] += 1;
            if order[i] != perm[i] {
                break;
            }
            num[i - 1] += 1;
        }
    }
    let per_class = numerators
        .iter()
        .map(|(&c, num)| {
            let den = &denominators[&c];
            let row = num
                .iter()
                .zip(den)
                .map(|(&n, &d)| (d > 0).then(|| n as f64 / d as f64))
                .collect();
            (c, row)
        })
        .collect();
    Ok(CpMatrix { ranks: k, per_class, numerators, denominators })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankLogitSummary {
    pub position: usize,
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    /// Equal-width bins over `[min, max]`.
    pub histogram: Vec<u64>,
}

pub const HISTOGRAM_BINS: usize = 20;

/// Distribution of the rank-`i` logit (the `i`-th largest) over all samples.
pub fn rank_logit_summary(
    logits: &LogitMatrix,
    canon: &CanonicalTable,
    positions: &[usize],
) -> Result<Vec<RankLogitSummary>> {
    let k = canon.ranks.min(logits.cols() - 1);
    if let Some(&bad) = positions.iter().find(|&&p| p > k) {
        return Err(Error::Validation(format!("position {bad} outside [0, {k}]")));
    }
    let sorted_rows: Vec<Vec<f64>> = logits
        .iter_rows()
        .map(|r| {
            let mut v: Vec<f64> = r.iter().map(|&x| f64::from(x)).collect();
            v.sort_by(|a, b| b.total_cmp(a));
            v
        })
        .collect();
    Ok(positions
        .iter()
        .map(|&p| {
            let vals: Vec<f64> = sorted_rows.iter().map(|r| r[p]).collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut histogram = vec![0u64; HISTOGRAM_BINS];
            let width = (max - min) / HISTOGRAM_BINS as f64;
            for v in &vals {
                let b = if width > 0.0 { ((v - min) / width) as usize } else { 0 };
                histogram[b.min(HISTOGRAM_BINS - 1)] += 1;
            }
            RankLogitSummary { position: p, count: vals.len(), mean, std: var.sqrt(), min, max, histogram }
        })
        .collect())
}

pub fn summaries_to_csv(rows: &[RankLogitSummary]) -> String {
    let mut out = String::from("position,count,mean,std,min,max");
    for b in 0..HISTOGRAM_BINS {
        out.push_str(&format!(",bin_{b}"));
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{},{:?},{:?},{:?},{:?}", r.position, r.count, r.mean, r.std, r.min, r.max));
        for h in &r.histogram {
            out.push_str(&format!(",{h}"));
        }
        out.push('\n');
    }
    out
}

/// Fraction of rows whose argmax equals the label.
pub fn accuracy(logits: &LogitMatrix) -> Result<f64> {
    let labels = logits.require_labels()?;
    let hits = logits
        .iter_rows()
        .zip(labels)
        .filter(|(r, &l)| argmax(r) == l as usize)
        .count();
    Ok(hits as f64 / logits.rows() as f64)
}
