use thiserror::Error;

/// Which part of a canonical form made an operation singular.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingularPart {
    /// The `K×K` core matrix `A`.
    Core,
    /// The within-block eigenvalue `λ_k` of block `k`.
    Block(usize),
}

impl std::fmt::Display for SingularPart {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SingularPart::Core => write!(f, "core matrix A"),
            SingularPart::Block(k) => write!(f, "block {k} (lambda = 0)"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },
    #[error("block ({row_block},{col_block}) deviates from a constant by {deviation:e} (tol {tol:e})")]
    StructureViolation {
        row_block: usize,
        col_block: usize,
        deviation: f64,
        tol: f64,
    },
    #[error("singular: {0}")]
    Singular(SingularPart),
    #[error("no real logarithm: {0}")]
    NotRealLoggable(String),
    #[error("core matrix is not symmetric (asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("block sizes are not all equal")]
    UnequalBlocks,
    #[error("column {column} has zero second moment")]
    ZeroVariance { column: usize },
    #[error("invalid correlation: {0}")]
    InvalidCorrelation(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_mismatch(expected: impl ToString, found: impl ToString) -> Error {
    Error::DimensionMismatch {
        expected: expected.to_string(),
        found: found.to_string(),
    }
}
