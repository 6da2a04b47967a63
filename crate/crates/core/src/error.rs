//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the environment, trainer, oracles, and file formats.
#[derive(Debug, Error)]
pub enum Error {
    /// A constructor or operation was handed values that violate its bounds.
    #[error("configuration error: {0}")]
    Config(String),

    /// An argument left the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Config file parsing collects every violation before failing.
    #[error("invalid config ({} problem{}):\n{}", .0.len(), if .0.len() == 1 { "" } else { "s" }, .0.join("\n"))]
    Validation(Vec<String>),

    /// Internal bookkeeping disagreed with itself; indicates a bug upstream.
    #[error("internal consistency error: {0}")]
    Internal(String),

    /// A caller violated a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Exact enumeration would exceed its trajectory budget.
    #[error("enumeration budget exceeded: visited {visited} leaves, budget {budget}")]
    Budget { visited: usize, budget: usize },

    /// Training produced a non-finite gradient; the dump names the step and group.
    #[error("non-finite gradient at step {step}: {dump}")]
    NonFiniteGradient { step: usize, dump: String },

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit code per the CLI contract: 1 for validation-class
    /// errors, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Domain(_) | Error::Validation(_) => 1,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
