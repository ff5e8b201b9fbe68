//! Command-line driver for the rank-based OOD pipeline. Each subcommand is
//! one stage; stages communicate only through files in the output root.

pub mod config;
pub mod error;
pub mod stages;
pub mod workspace;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{resolve, Overrides, PipelineConfig};
pub use error::{CliError, Result};
pub use stages::run_stage;
pub use workspace::Workspace;

#[derive(Debug, Parser)]
#[command(name = "rankood", version, about = "Rank-based out-of-distribution detection")]
pub struct Cli {
    /// Output root shared by all stages.
    #[arg(long, env = "RANKOOD_OUT", default_value = "rankood-out", global = true)]
    pub out: PathBuf,
    /// JSON pipeline configuration; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Generate the synthetic train/val/test splits.
    Synth,
    /// Train the cross-entropy model and write its logits.
    TrainCe,
    /// Rank probability matrices from the training logits.
    Rpm,
    /// Canonical rankings from the RPMs.
    Canon,
    /// Train the hybrid-loss model against the canonical rankings.
    TrainRank,
    /// Threshold profile and rank weights.
    Profile,
    /// Score the test splits with every detector.
    Score,
    /// Metrics, CP matrices and rank-logit summaries.
    Eval,
    /// All stages in order.
    Run,
    /// Print the resolved configuration.
    ShowConfig,
}

impl Command {
    pub fn stages(self) -> &'static [&'static str] {
        use stages::*;
        match self {
            Command::Synth => &ALL[0..1],
            Command::TrainCe => &ALL[1..2],
            Command::Rpm => &ALL[2..3],
            Command::Canon => &ALL[3..4],
            Command::TrainRank => &ALL[4..5],
            Command::Profile => &ALL[5..6],
            Command::Score => &ALL[6..7],
            Command::Eval => &ALL[7..8],
            Command::Run => &ALL,
            Command::ShowConfig => &[],
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve(cli.config.as_deref(), &cli.overrides)?;
    if let Command::ShowConfig = cli.command {
        println!("{}", serde_json::to_string_pretty(&cfg).map_err(rankood::Error::from)?);
        return Ok(());
    }
    for stage in cli.command.stages() {
        run_stage(&cli.out, stage, &cfg)?;
        println!("{stage}: ok ({})", cli.out.display());
    }
    Ok(())
}
