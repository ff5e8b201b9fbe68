//! The resolved configuration shared by every stage.

use std::path::{Path, PathBuf};

use clap::Args;
use rankood::ood_scoring::{DEFAULT_GAMMA, DEFAULT_PERCENTILE};
use rankood::toy_trainer::{OodKind, Schedule, SyntheticSpec, TrainConfig};
use rankood::{Error, PenaltyConfig, SubsetMode};
use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub synth: SyntheticSpec,
    pub train: TrainConfig,
    pub gamma: f64,
    pub percentile: f64,
    /// Rank depth of the RPMs; `None` means `C - 1`.
    pub ranks: Option<usize>,
    /// External training logits for the `rpm` stage.
    pub rpm_logits: Option<PathBuf>,
    /// Pre-fitted rank weights used instead of the regression fit.
    pub weights_file: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            synth: SyntheticSpec::default(),
            train: TrainConfig::default(),
            gamma: DEFAULT_GAMMA,
            percentile: DEFAULT_PERCENTILE,
            ranks: None,
            rpm_logits: None,
            weights_file: None,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(rankood::tensor_io::read_json(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.train.validate()?;
        PenaltyConfig::new(self.gamma)?;
        if !(self.percentile > 0.0 && self.percentile < 1.0) {
            return Err(Error::Validation(format!("percentile must lie in (0, 1), got {}", self.percentile)).into());
        }
        if self.ranks == Some(0) {
            return Err(Error::Validation("ranks must be >= 1".into()).into());
        }
        Ok(())
    }
}

fn parse_ood_kind(s: &str) -> std::result::Result<OodKind, String> {
    match s {
        "near" => Ok(OodKind::Near),
        "far" => Ok(OodKind::Far),
        _ => Err(format!("expected near or far, got {s:?}")),
    }
}

fn parse_schedule(s: &str) -> std::result::Result<Schedule, String> {
    match s {
        "constant" => Ok(Schedule::Constant),
        "cosine" => Ok(Schedule::Cosine),
        _ => Err(format!("expected constant or cosine, got {s:?}")),
    }
}

fn parse_subset(s: &str) -> std::result::Result<SubsetMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Flags layered over the defaults and the optional `--config` file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long, global = true)]
    pub classes: Option<usize>,
    #[arg(long, global = true)]
    pub dim: Option<usize>,
    #[arg(long, global = true)]
    pub samples_per_class: Option<usize>,
    #[arg(long, global = true)]
    pub similarity: Option<f64>,
    #[arg(long, global = true)]
    pub ood_shift: Option<f64>,
    #[arg(long, global = true, value_parser = parse_ood_kind)]
    pub ood_kind: Option<OodKind>,
    /// Seeds both the data generator and training.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    #[arg(long, global = true)]
    pub momentum: Option<f64>,
    #[arg(long, global = true, value_parser = parse_schedule)]
    pub schedule: Option<Schedule>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true, value_parser = parse_subset)]
    pub subset_mode: Option<SubsetMode>,
    #[arg(long, global = true)]
    pub subset_n: Option<usize>,
    /// Hidden layer widths, e.g. `64,32`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long, global = true)]
    pub warm_start: bool,
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    #[arg(long, global = true)]
    pub percentile: Option<f64>,
    #[arg(long, global = true)]
    pub ranks: Option<usize>,
    #[arg(long, global = true)]
    pub logits: Option<PathBuf>,
    #[arg(long, global = true)]
    pub weights_file: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut PipelineConfig) {
        let s = &mut cfg.synth;
        let t = &mut cfg.train;
        macro_rules! set {
            ($dst:expr, $src:expr) => {
                if let Some(v) = $src.clone() {
                    $dst = v;
                }
            };
        }
        set!(s.n_classes, self.classes);
        set!(s.feature_dim, self.dim);
        set!(s.samples_per_class, self.samples_per_class);
        set!(s.class_similarity, self.similarity);
        set!(s.ood_shift, self.ood_shift);
        set!(s.ood_kind, self.ood_kind);
        if let Some(seed) = self.seed {
            s.seed = seed;
            t.seed = seed;
        }
        set!(t.epochs, self.epochs);
        set!(t.batch_size, self.batch_size);
        set!(t.learning_rate, self.lr);
        set!(t.momentum, self.momentum);
        set!(t.schedule, self.schedule);
        set!(t.alpha, self.alpha);
        set!(t.subset_mode, self.subset_mode);
        set!(t.subset_n, self.subset_n);
        set!(t.hidden, self.hidden);
        if self.warm_start {
            t.warm_start = true;
        }
        set!(cfg.gamma, self.gamma);
        set!(cfg.percentile, self.percentile);
        if self.ranks.is_some() {
            cfg.ranks = self.ranks;
        }
        if self.logits.is_some() {
            cfg.rpm_logits = self.logits.clone();
        }
        if self.weights_file.is_some() {
            cfg.weights_file = self.weights_file.clone();
        }
    }
}

/// Defaults, then `file`, then `overrides`.
pub fn resolve(file: Option<&Path>, overrides: &Overrides) -> Result<PipelineConfig> {
    let mut cfg = match file {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    overrides.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}
