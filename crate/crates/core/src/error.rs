use thiserror::Error;

/// Errors produced by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite value {value} at node {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("grid mismatch: ({left_n}, {left_period}) vs ({right_n}, {right_period})")]
    GridMismatch {
        left_n: usize,
        left_period: f64,
        right_n: usize,
        right_period: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The inverse transform produced a non-negligible imaginary part, meaning
    /// the spectrum lost Hermitian symmetry somewhere upstream.
    #[error("imaginary residue {residue:e} (relative) after inverse transform")]
    ImaginaryResidue { residue: f64 },

    #[error("solver aborted: {0}")]
    Abort(String),

    #[error("undefined: {0}")]
    Undefined(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
