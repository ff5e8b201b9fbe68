//! Cross-entropy training, canonical rankings from its train logits, then
//! hybrid training against those rankings.

use super::mlp::{Architecture, ModelParams};
use super::synth::{generate_synthetic, SyntheticData, SyntheticSpec};
use super::train::{train, train_ce, LossHistory, TrainConfig};
use crate::canonical_ranks::{solve_all, CanonicalTable};
use crate::error::Result;
use crate::rank_stats::{compute_all_rpms, RankProbabilityMatrix};

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub data: SyntheticData,
    pub ce_model: ModelParams,
    pub ce_history: LossHistory,
    pub rpms: Vec<RankProbabilityMatrix>,
    pub canonical: CanonicalTable,
    pub rank_model: ModelParams,
    pub rank_history: LossHistory,
}

/// Seed offset for the ranking-stage initialization when not warm-starting.
const RANK_INIT_OFFSET: u64 = 1;

pub fn two_stage_pipeline(spec: &SyntheticSpec, config: &TrainConfig) -> Result<PipelineOutput> {
    config.validate()?;
    let data = generate_synthetic(spec)?;
    let arch = Architecture::new(spec.feature_dim, config.hidden.clone(), spec.n_classes);
    let init = ModelParams::init(arch.clone(), config.seed)?;
    let (ce_model, ce_history) = train_ce(init, &data.train, config)?;

    let train_logits = ce_model.logits(&data.train)?;
    let rpms = compute_all_rpms(&train_logits, None)?;
    let canonical = solve_all(&rpms, spec.n_classes)?;

    let start = if config.warm_start {
        ce_model.clone()
    } else {
        ModelParams::init(arch, config.seed.wrapping_add(RANK_INIT_OFFSET))?
    };
    let (rank_model, rank_history) = train(start, &data.train, &canonical, config)?;
    Ok(PipelineOutput { data, ce_model, ce_history, rpms, canonical, rank_model, rank_history })
}
