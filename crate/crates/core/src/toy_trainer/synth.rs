//! Gaussian-cluster datasets with a controlled class-similarity order.
//!
//! Class `c` has mean `R * (sqrt(1 - s) e_c + sqrt(s) p_c e_C)`, where `s` is
//! `class_similarity` and `p_c` are irregularly spaced positions on a shared
//! axis. Distances between classes therefore differ only through
//! `|p_c - p_k|`, which gives every class a stable order of neighbours. The
//! remaining `d - C - 1` axes carry noise only and host the far-OOD shift.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor_io::{LogitMatrix, SplitTag};

/// Norm of each class mean.
pub const MEAN_RADIUS: f64 = 8.0;
/// Isotropic per-axis noise.
pub const NOISE_STD: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OodKind {
    /// Means interpolated between two ID means, then shifted by `ood_shift`
    /// along an axis orthogonal to the ID means.
    Near,
    /// The ID centroid shifted by `ood_shift` along orthogonal axes.
    Far,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub feature_dim: usize,
    pub samples_per_class: usize,
    pub class_similarity: f64,
    pub ood_shift: f64,
    pub ood_kind: OodKind,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_classes: 8,
            feature_dim: 16,
            samples_per_class: 300,
            class_similarity: 0.6,
            ood_shift: 1.0,
            ood_kind: OodKind::Near,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 3 {
            return Err(Error::Validation(format!("n_classes = {} but at least 3 are required", self.n_classes)));
        }
        if self.feature_dim < 2 {
            return Err(Error::Validation("feature_dim must be >= 2".into()));
        }
        // One axis per class, one shared axis, and at least one axis
        // orthogonal to all ID means.
        if self.feature_dim < self.n_classes + 2 {
            return Err(Error::Validation(format!(
                "feature_dim = {} but {} classes need at least {}",
                self.feature_dim,
                self.n_classes,
                self.n_classes + 2
            )));
        }
        if self.samples_per_class < 2 {
            return Err(Error::Validation("samples_per_class must be >= 2".into()));
        }
        if !(0.0..=1.0).contains(&self.class_similarity) {
            return Err(Error::Validation("class_similarity must lie in [0, 1]".into()));
        }
        if !(self.ood_shift >= 0.0 && self.ood_shift.is_finite()) {
            return Err(Error::Validation("ood_shift must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Per-class count for the validation and test ID splits.
    pub fn eval_per_class(&self) -> usize {
        (self.samples_per_class / 2).max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub train: LogitMatrix,
    pub val_id: LogitMatrix,
    pub val_ood: LogitMatrix,
    pub test_id: LogitMatrix,
    pub test_ood: LogitMatrix,
}

impl SyntheticData {
    pub fn split(&self, tag: SplitTag) -> &LogitMatrix {
        match tag {
            SplitTag::Train => &self.train,
            SplitTag::ValId => &self.val_id,
            SplitTag::ValOod => &self.val_ood,
            SplitTag::TestId => &self.test_id,
            SplitTag::TestOod => &self.test_ood,
        }
    }
}

/// Positions on the shared axis, spaced so that no class has two equidistant
/// nearest neighbours.
fn shared_positions(c: usize) -> Vec<f64> {
    (0..c)
        .map(|k| {
            let t = k as f64 / (c - 1) as f64;
            2.0 * t.powf(1.6) - 1.0
        })
        .collect()
}

pub fn class_means(spec: &SyntheticSpec) -> Vec<Vec<f64>> {
    let c = spec.n_classes;
    let s = spec.class_similarity;
    let pos = shared_positions(c);
    (0..c)
        .map(|k| {
            let mut m = vec![0.0; spec.feature_dim];
            m[k] = MEAN_RADIUS * (1.0 - s).sqrt();
            m[c] = MEAN_RADIUS * s.sqrt() * pos[k];
            m
        })
        .collect()
}

fn sample_around(rng: &mut ChaCha8Rng, mean: &[f64]) -> Vec<f32> {
    mean.iter()
        .map(|&m| (m + NOISE_STD * rng.sample::<f64, _>(StandardNormal)) as f32)
        .collect()
}

fn labelled_split(rng: &mut ChaCha8Rng, means: &[Vec<f64>], per_class: usize, tag: SplitTag) -> Result<LogitMatrix> {
    let mut order: Vec<usize> = (0..means.len()).flat_map(|c| std::iter::repeat_n(c, per_class)).collect();
    order.shuffle(rng);
    let rows: Vec<Vec<f32>> = order.iter().map(|&c| sample_around(rng, &means[c])).collect();
    let labels = order.iter().map(|&c| c as u32).collect();
    LogitMatrix::from_rows(&rows, Some(labels), tag)
}

fn ood_split(
    rng: &mut ChaCha8Rng,
    spec: &SyntheticSpec,
    means: &[Vec<f64>],
    n: usize,
    tag: SplitTag,
) -> Result<LogitMatrix> {
    let c = spec.n_classes;
    let d = spec.feature_dim;
    let free_axes: Vec<usize> = (c + 1..d).collect();
    let centroid: Vec<f64> = (0..d).map(|j| means.iter().map(|m| m[j]).sum::<f64>() / c as f64).collect();
    let rows: Vec<Vec<f32>> = (0..n)
        .map(|_| {
            let axis = free_axes[rng.gen_range(0..free_axes.len())];
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let mut mean = match spec.ood_kind {
                OodKind::Near => {
                    let a = rng.gen_range(0..c);
                    let b = (a + rng.gen_range(1..c)) % c;
                    let lambda = rng.gen_range(0.35..0.65);
                    (0..d).map(|j| lambda * means[a][j] + (1.0 - lambda) * means[b][j]).collect()
                }
                OodKind::Far => centroid.clone(),
            };
            mean[axis] += sign * spec.ood_shift;
            sample_around(rng, &mean)
        })
        .collect();
    LogitMatrix::from_rows(&rows, None, tag)
}

/// Generates all five splits. Identical specs give bitwise-identical data.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let means = class_means(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let eval = spec.eval_per_class();
    let n_ood = eval * spec.n_classes;
    let train = labelled_split(&mut rng, &means, spec.samples_per_class, SplitTag::Train)?;
    let val_id = labelled_split(&mut rng, &means, eval, SplitTag::ValId)?;
    let val_ood = ood_split(&mut rng, spec, &means, n_ood, SplitTag::ValOod)?;
    let test_id = labelled_split(&mut rng, &means, eval, SplitTag::TestId)?;
    let test_ood = ood_split(&mut rng, spec, &means, n_ood, SplitTag::TestOod)?;
    Ok(SyntheticData { train, val_id, val_ood, test_id, test_ood })
}
