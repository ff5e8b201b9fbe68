//! Rank-consistency out-of-distribution detection.
//!
//! The pipeline runs in three steps:
//!
//! 1. From a classifier trained with cross-entropy, tally where every other
//!    class lands in the sorted logit vector of correctly classified samples
//!    ([`rank_stats`]) and pick one canonical ranking per class by solving an
//!    assignment problem ([`canonical_ranks`]).
//! 2. Retrain with cross-entropy plus a Plackett–Luce ListMLE term that pulls
//!    the logits toward those canonical orderings ([`pl_objective`],
//!    [`toy_trainer`]).
//! 3. Score inputs by how far their penalized per-rank logits fall from a
//!    class-specific reference profile ([`ood_scoring`]), evaluated with
//!    AUROC / FPR95 ([`metrics_eval`]).
//!
//! [`tensor_io`] holds the on-disk formats shared by every stage.

pub mod canonical_ranks;
pub mod error;
pub mod metrics_eval;
pub mod ood_scoring;
pub mod pl_objective;
pub mod rank_stats;
pub mod tensor_io;
pub mod toy_trainer;

mod numeric;

pub use canonical_ranks::{
    solve_assignment, solve_assignment_bruteforce, CanonicalRanking, CanonicalTable,
};
pub use error::{Error, Result};
pub use metrics_eval::{auroc, cp_matrix, fpr_at_tpr, rank_logit_summary, CpMatrix, ScoreReport};
pub use ood_scoring::{
    build_profile, fit_weights, msp_score, penalty_vector, rankood_score, PenaltyConfig,
    RankWeights, ThresholdProfile,
};
pub use pl_objective::{
    hybrid_loss, listmle_grad, listmle_loss, pl_permutation_prob, select_rank_subset, LossValue,
    RankTarget, SubsetMode,
};
pub use rank_stats::{compute_rpm, RankProbabilityMatrix};
pub use tensor_io::{DatasetManifest, LogitMatrix, MatrixFormat, SplitTag};
