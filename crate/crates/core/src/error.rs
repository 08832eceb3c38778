use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operator is not positive semidefinite (minimum eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("invalid POVM: minimum eigenvalue {min_eigenvalue:e}, identity defect {sum_defect:e}")]
    InvalidPovm { min_eigenvalue: f64, sum_defect: f64 },

    #[error("random generation failed after {attempts} attempts: {reason}")]
    GenerationFailed { attempts: usize, reason: String },

    #[error("constraints inconsistent (residual {0:e}); increase the slack")]
    Infeasible(f64),

    #[error("no records")]
    NoRecords,

    #[error("probe {0} has zero total count")]
    ZeroCounts(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
