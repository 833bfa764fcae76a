use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A physical or numerical parameter is outside its allowed domain.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    /// A config document failed validation. `path` is the dotted key path.
    #[error("config error at `{path}`: {reason}")]
    Config { path: String, reason: String },

    #[error("grids differ: {0}")]
    GridMismatch(String),

    #[error("numerical instability: {0}")]
    Unstable(String),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        what: String,
        iterations: usize,
        residual: f64,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("need at least {needed} points, got {got}: {what}")]
    TooFewPoints {
        what: String,
        needed: usize,
        got: usize,
    },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("snapshot {path}: {reason}")]
    Snapshot { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    pub fn config(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
