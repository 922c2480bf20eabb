use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is singular: |A[{index}][{index}]| = {value:e}")]
    SingularMatrix { index: usize, value: f64 },

    #[error("bound hypotheses violated: {0}")]
    HypothesisViolation(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point outside support (coordinate {coord}: {value} not in [{lower}, {upper}])")]
    OutOfSupport {
        coord: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("data row {row} lies outside the map support")]
    RowOutOfSupport { row: usize },

    #[error("density vanishes at the evaluation point")]
    ZeroDensity,

    #[error("{0} is not supported for this density kind")]
    Unsupported(String),

    #[error("bisection bracket failure: level {level} not attained on [{lower}, {upper}]")]
    BracketFailure { level: f64, lower: f64, upper: f64 },

    #[error("diagonal partial D_{k}S_{k} = {value} is not positive")]
    NonPositiveDiagonal { k: usize, value: f64 },

    #[error("non-positive median loss {value} at n = {n}; subtract a smaller floor first")]
    NonPositiveMedian { n: usize, value: f64 },

    #[error("matrix is not orthogonal (max |Q^T Q - I| = {0:e})")]
    NotOrthogonal(f64),

    #[error("empty dataset")]
    EmptyData,

    #[error("config error: {0}")]
    Config(String),

    #[error("experiment failed: {0}")]
    Experiment(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
