use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("class {class} has no correctly classified support")]
    EmptySupport { class: usize },

    #[error("infeasible assignment: {ranks} ranks but only {candidates} candidate classes")]
    Infeasible { ranks: usize, candidates: usize },

    #[error("brute-force guard: {0} candidates exceeds the limit of 8")]
    BruteForceGuard(usize),

    #[error("target position 0 holds class {target} but the label is {label}")]
    LabelMismatch { label: usize, target: usize },

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Divergence { epoch: usize },

    #[error("model output at row {row} overflows the f32 logit range")]
    LogitOverflow { row: usize },

    #[error("no correct predictions for classes {0:?}")]
    MissingClasses(Vec<usize>),

    #[error("class {0} is not covered by the profile or canonical table")]
    UnknownClass(usize),

    #[error("fitting error: {0}")]
    Fit(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Whether the failure comes from a numerical breakdown rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Divergence { .. } | Error::LogitOverflow { .. } | Error::Fit(_))
    }
}
