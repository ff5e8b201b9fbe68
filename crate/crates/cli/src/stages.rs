//! One function per subcommand. Every stage reads its inputs through the
//! manifest, writes into its own directory and echoes the resolved config.

use std::collections::BTreeMap;

use rankood::canonical_ranks::solve_all;
use rankood::metrics_eval::{accuracy, summaries_to_csv, ReportSummary};
use rankood::ood_scoring::features_for;
use rankood::rank_stats::compute_all_rpms;
use rankood::tensor_io::{self, MatrixFormat};
use rankood::toy_trainer::{generate_synthetic, train, train_ce, Architecture, ModelParams};
use rankood::{
    cp_matrix, fit_weights, msp_score, rank_logit_summary, rankood_score, build_profile, CanonicalTable,
    Error, LogitMatrix, RankProbabilityMatrix, RankWeights, ScoreReport, SplitTag, ThresholdProfile,
};
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::Result;
use crate::workspace::Workspace;

pub const SYNTH: &str = "synth";
pub const TRAIN_CE: &str = "train-ce";
pub const RPM: &str = "rpm";
pub const CANON: &str = "canon";
pub const TRAIN_RANK: &str = "train-rank";
pub const PROFILE: &str = "profile";
pub const SCORE: &str = "score";
pub const EVAL: &str = "eval";

/// Stages in pipeline order.
pub const ALL: [&str; 8] = [SYNTH, TRAIN_CE, RPM, CANON, TRAIN_RANK, PROFILE, SCORE, EVAL];

/// Seed offset for the ranking-stage initialization when not warm-starting.
const RANK_INIT_OFFSET: u64 = 1;

fn data_file(split: SplitTag) -> String {
    format!("data/{split}.bin")
}

fn logits_file(model: &str, split: SplitTag) -> String {
    format!("{model}/logits/{split}.bin")
}

pub fn cmd_synth(ws: &mut Workspace, cfg: &PipelineConfig) -> Result<()> {
    let data = generate_synthetic(&cfg.synth)?;
    for split in SplitTag::ALL {
        ws.write_logits(&data_file(split), data.split(split), SYNTH)?;
    }
    ws.write_config("data", cfg, SYNTH)
}

fn emit_logits(ws: &mut Workspace, dir: &str, model: &ModelParams, producer: &str) -> Result<()> {
    for split in SplitTag::ALL {
        let x = ws.read_logits(&data_file(split), SYNTH, split)?;
        ws.write_logits(&logits_file(dir, split), &model.logits(&x)?, producer)?;
    }
    Ok(())
}

pub fn cmd_train_ce(ws: &mut Workspace, cfg: &PipelineConfig) -> Result<()> {
    let train_x = ws.read_logits(&data_file(SplitTag::Train), SYNTH, SplitTag::Train)?;
    let n_classes = train_x
        .labels()
        .and_then(|l| l.iter().max())
        .map_or(0, |&m| m as usize + 1);
    let arch = Architecture::new(train_x.cols(), cfg.train.hidden.clone(), n_classes);
    let init = ModelParams::init(arch, cfg.train.seed)?;
    let (model, history) = train_ce(init, &train_x, &cfg.train)?;
    ws.write_model("ce/model", &model, TRAIN_CE)?;
    ws.write_json("ce/history.json", &history, TRAIN_CE)?;
    emit_logits(ws, "ce", &model, TRAIN_CE)?;
    ws.write_config("ce", cfg, TRAIN_CE)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpmIndex {
    pub n_classes: usize,
    pub ranks: usize,
    pub files: Vec<String>,
}

pub fn cmd_rpm(ws: &mut Workspace, cfg: &PipelineConfig) -> Result<()> {
    let logits = match &cfg.rpm_logits {
        Some(p) => tensor_io::read_logits(p, MatrixFormat::from_path(p), SplitTag::Train)?,
        None => ws.read_logits(&logits_file("ce", SplitTag::Train), TRAIN_CE, SplitTag::Train)?,
    };
    let rpms = compute_all_rpms(&logits, cfg.ranks)?;
    let mut files = Vec::new();
    for rpm in &rpms {
        let name = format!("rpm/class_{}.csv", rpm.predicted_class);
        ws.write_text(&name, &rpm.to_csv(), RPM)?;
        files.push(name);
    }
    let index = RpmIndex { n_classes: logits.cols(), ranks: rpms[0].ranks, files };
    ws.write_json("rpm/index.json", &index, RPM)?;
    ws.write_config("rpm", cfg, RPM)
}

pub fn cmd_canon(ws: &mut Workspace, cfg: &PipelineConfig) -> Result<()> {
    let index: RpmIndex = ws.read_json("rpm/index.json", RPM)?;
    let rpms = index
        .files
        .iter()
        .map(|f| Ok(RankProbabilityMatrix::from_csv(&ws.read_text(f, RPM)?, index.n_classes)?))
        .collect::<Result<Vec<_>>>()?;
    let table = solve_all(&rpms, index.n_classes)?;
    ws.write_json("canon/canonical.json", &table, CANON)?;
    ws.write_config("canon", cfg, CANON)
}

fn read_canon(ws: &Workspace) -> Result<CanonicalTable> {
    ws.read_json("canon/canonical.json", CANON)
}

pub fn cmd_train_rank(ws: &mut Workspace, cfg: &PipelineConfig) -> Result<()> {
    let canon = read_canon(ws)?;
    let train_x = ws.read_logits(&data_file(SplitTag::Train), SYNTH, SplitTag::Train)?;
    let init = if cfg.train.warm_start {
        ws.read_model("ce/model", TRAIN_CE)?
    } else {
        let arch = Architecture::new(train_x.cols(), cfg.train.hidden.clone(), canon.n_classes);
        ModelParams::init(arch, cfg.train.seed.wrapping_add(RANK_INIT_OFFSET))?
    };
    let (model, history) = train(init, &train_x, &canon, &cfg.train)?;
    ws.write_model("rank/model", &model, TRAIN_RANK)?;
    ws.write_json("rank/history.json", &history, TRAIN_RANK)?;
    emit_logits(ws, "rank", &model, TRAIN_RANK)?;
    ws.write_config("rank", cfg, TRAIN_RANK)
}

/// `profile/profile.json`: the reference logits together with the penalty base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileFile {
    pub gamma: f64,
    pub profile: ThresholdProfile,
}

pub fn cmd_profile(ws: &mut Workspace, cfg: &PipelineConfig) -> Result<()> {
    let canon = read_canon(ws)?;
    let train_logits = ws.read_logits(&logits_file("rank", SplitTag::Train), TRAIN_RANK, SplitTag::Train)?;
    let profile = build_profile(&train_logits, &canon, cfg.percentile)?;
    let weights = match &cfg.weights_file {
        Some(p) => {
            let w: RankWeights = tensor_io::read_json(p)?;
            if w.w.len() != profile.ranks + 1 {
                return Err(Error::Validation(format!(
                    "{} holds {} weights, expected {}",
                    p.display(),
                    w.w.len(),
                    profile.ranks + 1
                ))
                .into());
            }
            w
        }
        None => {
            let id = ws.read_logits(&logits_file("rank", SplitTag::ValId), TRAIN_RANK, SplitTag::ValId)?;
            let ood = ws.read_logits(&logits_file("rank", SplitTag::ValOod), TRAIN_RANK, SplitTag::ValOod)?;
            fit_weights(
                &features_for(&id, &canon, &profile, cfg.gamma)?,
                &features_for(&ood, &canon, &profile, cfg.gamma)?,
            )?
        }
    };
    ws.write_json("profile/profile.json", &ProfileFile { gamma: cfg.gamma, profile }, PROFILE)?;
    ws.write_json("profile/weights.json", &weights, PROFILE)?;
    ws.write_config("profile", cfg, PROFILE)
}

fn scores<F: Fn(&[f64]) -> rankood::Result<f64>>(logits: &LogitMatrix, f: F) -> Result<Vec<f64>> {
    Ok((0..logits.rows()).map(|i| f(&logits.row_f64(i))).collect::<rankood::Result<_>>()?)
}

/// Detectors written by `score`.
pub const DETECTORS: [&str; 3] = ["rankood", "msp", "msp_ce"];

pub fn cmd_score(ws: &mut Workspace, cfg: &PipelineConfig) -> Result<()> {
    let canon = read_canon(ws)?;
    let pf: ProfileFile = ws.read_json("profile/profile.json", PROFILE)?;
    let weights: RankWeights = ws.read_json("profile/weights.json", PROFILE)?;
    let load = |ws: &Workspace, model: &str, producer| -> Result<(LogitMatrix, LogitMatrix)> {
        Ok((
            ws.read_logits(&logits_file(model, SplitTag::TestId), producer, SplitTag::TestId)?,
            ws.read_logits(&logits_file(model, SplitTag::TestOod), producer, SplitTag::TestOod)?,
        ))
    };
    let (rank_id, rank_ood) = load(ws, "rank", TRAIN_RANK)?;
    let (ce_id, ce_ood) = load(ws, "ce", TRAIN_CE)?;
    let rankood = |x: &[f64]| rankood_score(x, &canon, &pf.profile, &weights, pf.gamma);
    let reports = [
        ScoreReport::new("rankood", scores(&rank_id, rankood)?, scores(&rank_ood, rankood)?)?,
        ScoreReport::new("msp", scores(&rank_id, msp_score)?, scores(&rank_ood, msp_score)?)?,
        ScoreReport::new("msp_ce", scores(&ce_id, msp_score)?, scores(&ce_ood, msp_score)?)?,
    ];
    for r in &reports {
        ws.write_json(&format!("scores/{}.json", r.detector_name), r, SCORE)?;
    }
    ws.write_config("scores", cfg, SCORE)
}

/// Per-detector summaries, in input order.
pub fn summarize(reports: &[ScoreReport], cfg: &PipelineConfig) -> Result<Vec<ReportSummary>> {
    let echo = serde_json::to_value(cfg).map_err(Error::from)?;
    Ok(reports.iter().map(|r| r.summary(echo.clone())).collect())
}

pub fn summaries_csv(rows: &[ReportSummary]) -> String {
    let mut out = String::from("detector,n_id,n_ood,auroc,fpr95,threshold\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{:?},{:?},{:?}\n", r.detector, r.n_id, r.n_ood, r.auroc, r.fpr95, r.threshold));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub detectors: Vec<ReportSummary>,
    /// Test-ID accuracy per model.
    pub accuracy: BTreeMap<String, f64>,
    /// Mean defined CP entry per `{model}_{split}`.
    pub cp_mean: BTreeMap<String, Option<f64>>,
}

pub fn cmd_eval(ws: &mut Workspace, cfg: &PipelineConfig) -> Result<()> {
    let reports = DETECTORS
        .iter()
        .map(|d| ws.read_json::<ScoreReport>(&format!("scores/{d}.json"), SCORE))
        .collect::<Result<Vec<_>>>()?;
    let detectors = summarize(&reports, cfg)?;
    let canon = read_canon(ws)?;
    let positions: Vec<usize> = (0..=canon.ranks).collect();
    let mut acc = BTreeMap::new();
    let mut cp_mean = BTreeMap::new();
    for (model, producer) in [("ce", TRAIN_CE), ("rank", TRAIN_RANK)] {
        for split in [SplitTag::TestId, SplitTag::TestOod] {
            let logits = ws.read_logits(&logits_file(model, split), producer, split)?;
            if split == SplitTag::TestId {
                acc.insert(model.to_string(), accuracy(&logits)?);
            }
            let key = format!("{model}_{split}");
            let cp = cp_matrix(&logits, &canon)?;
            cp_mean.insert(key.clone(), cp.mean_entry());
            ws.write_text(&format!("eval/cp_{key}.csv"), &cp.to_csv(), EVAL)?;
            let summary = rank_logit_summary(&logits, &canon, &positions)?;
            ws.write_text(&format!("eval/rank_logits_{key}.csv"), &summaries_to_csv(&summary), EVAL)?;
        }
    }
    ws.write_text("eval/report.csv", &summaries_csv(&detectors), EVAL)?;
    ws.write_json("eval/report.json", &EvalReport { detectors, accuracy: acc, cp_mean }, EVAL)?;
    ws.write_config("eval", cfg, EVAL)
}

/// Runs `stage`, persisting the manifest afterwards.
pub fn run_stage(root: &std::path::Path, stage: &str, cfg: &PipelineConfig) -> Result<()> {
    let mut ws = if stage == SYNTH { Workspace::create(root, cfg.synth.seed)? } else { Workspace::open(root)? };
    match stage {
        SYNTH => cmd_synth(&mut ws, cfg)?,
        TRAIN_CE => cmd_train_ce(&mut ws, cfg)?,
        RPM => cmd_rpm(&mut ws, cfg)?,
        CANON => cmd_canon(&mut ws, cfg)?,
        TRAIN_RANK => cmd_train_rank(&mut ws, cfg)?,
        PROFILE => cmd_profile(&mut ws, cfg)?,
        SCORE => cmd_score(&mut ws, cfg)?,
        EVAL => cmd_eval(&mut ws, cfg)?,
        other => return Err(Error::Validation(format!("unknown stage {other:?}")).into()),
    }
    ws.save()
}
