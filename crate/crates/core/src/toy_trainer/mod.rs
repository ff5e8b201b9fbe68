//! Desk-scale training: synthetic Gaussian-cluster data, a small MLP, SGD
//! with momentum and the two-stage (cross-entropy, then hybrid) pipeline.

pub mod mlp;
pub mod pipeline;
pub mod synth;
pub mod train;

pub use mlp::{Architecture, ModelParams};
pub use pipeline::{two_stage_pipeline, PipelineOutput};
pub use synth::{generate_synthetic, OodKind, SyntheticData, SyntheticSpec};
pub use train::{train, train_ce, LossHistory, Objective, Schedule, Sgd, TrainConfig, Trainer};
