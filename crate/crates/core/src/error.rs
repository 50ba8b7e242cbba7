use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the simulation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("missing required file: {0}")]
    MissingFile(PathBuf),

    #[error("parse error in {file}: {msg}")]
    Parse { file: String, msg: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("no reachable destination zone (all choice utilities are -inf)")]
    NoDestination,

    #[error("stale artifact: {0}")]
    StaleArtifact(String),

    #[error("simulation deadlock: {0}")]
    Deadlock(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Maps errors onto the CLI exit-code contract: 1 for user/input
    /// problems, 2 for internal failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Internal(_) | Error::Deadlock(_) => 2,
            _ => 1,
        }
    }

    pub fn parse(file: impl AsRef<std::path::Path>, msg: impl Into<String>) -> Self {
        Error::Parse {
            file: file.as_ref().display().to_string(),
            msg: msg.into(),
        }
    }
}
