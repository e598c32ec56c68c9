//! Error type shared by every module in the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Everything that can go wrong while loading data, fitting, or simulating.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty sample passed to {what}")]
    EmptySample { what: &'static str },

    #[error("{what} needs at least {needed} values, got {got}")]
    TooFewValues {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("non-finite value encountered in {what}")]
    NonFinite { what: &'static str },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("design matrix is rank deficient along {null_direction:?}")]
    RankDeficient { null_direction: Vec<f64> },

    #[error("singular linear system in {what}")]
    Singular { what: &'static str },

    #[error("degenerate component: {reason}")]
    DegenerateComponent { reason: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("shape mismatch in {what}: {details}")]
    ShapeMismatch { what: &'static str, details: String },

    #[error("estimator `{estimator}` requires complete data; dataset has missing cells")]
    IncompleteData { estimator: &'static str },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("model file {path}: {source}")]
    ModelFormat {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
