use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An input violates a mathematical precondition (negative mass, non-positive gamma, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("sinkhorn did not converge after {iterations} iterations (marginal violation {violation:e})")]
    NotConverged { iterations: usize, violation: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("exact transport oracle refused a {cells}-cell instance (cap {cap})")]
    OracleTooLarge { cells: usize, cap: usize },

    #[error("{factor} is rank deficient (singular value ratio {ratio:e}); reinitialize it")]
    RankDeficient { factor: &'static str, ratio: f64 },

    #[error("dual divergence in {step}: {detail}")]
    DualDivergence { step: &'static str, detail: String },

    #[error("unknown user {0}")]
    UnknownUser(u64),

    #[error("{0}")]
    InvalidArgument(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures raised by the numerical solvers rather than by inputs.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::NotConverged { .. }
                | Error::NonFinite(_)
                | Error::RankDeficient { .. }
                | Error::DualDivergence { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
