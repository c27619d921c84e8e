use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("retraction is rank deficient at step {step:e}")]
    RankDeficient { step: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("all {restarts} optimizer restarts failed; last failure: {last}")]
    AllRestartsFailed { restarts: usize, last: String },

    #[error("no cluster reaches the minimum size {min_size}")]
    NoAcceptableCluster { min_size: usize },

    #[error("exploration iteration {iteration}: {source}")]
    Exploration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: invalid IDX file: {msg}")]
    Idx { path: PathBuf, msg: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidDataset(_) => "invalid_dataset",
            Error::InvalidPrior(_) => "invalid_prior",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::Singular(_) => "singular",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::NonFinite(_) => "non_finite",
            Error::AllRestartsFailed { .. } => "optimizer_failed",
            Error::NoAcceptableCluster { .. } => "no_acceptable_cluster",
            Error::Exploration { .. } => "exploration_failed",
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Idx { .. } => "idx",
        }
    }
}
