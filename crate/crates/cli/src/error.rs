use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] rankood::Error),
    #[error("dependency error: {path} is {reason}; run `rankood {producer}` first")]
    Dependency { path: PathBuf, producer: &'static str, reason: &'static str },
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    /// 2 validation, 3 dependency, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Dependency { .. } => 3,
            CliError::Core(rankood::Error::Io { .. }) => 3,
            CliError::Core(e) if e.is_numerical() => 4,
            CliError::Core(_) => 2,
        }
    }
}
