use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("expected exactly two groups, found {found}: {labels:?}")]
    GroupCount { found: usize, labels: Vec<String> },

    #[error("group '{group}' has no events: Kaplan-Meier weights all zero")]
    NoEvents { group: String },

    #[error("zero normalizer in {0}")]
    ZeroNormalizer(&'static str),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("kernel bandwidth is Auto and must be resolved before evaluation")]
    UnresolvedBandwidth,

    #[error("degenerate bandwidth: {0}")]
    DegenerateBandwidth(String),

    #[error("C({n}, {k}) = {count} assignments exceeds the exact-enumeration threshold {threshold}")]
    TooManyAssignments {
        n: usize,
        k: usize,
        count: u128,
        threshold: u128,
    },

    #[error("{degenerate} of {total} permuted assignments left a group without a computable statistic")]
    DegeneratePermutations { degenerate: u64, total: u64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
