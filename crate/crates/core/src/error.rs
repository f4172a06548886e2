use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed row at line {line}: {message}")]
    MalformedRow { line: usize, message: String },

    #[error("duplicate timestamp {timestamp} at line {line}")]
    DuplicateTimestamp { line: usize, timestamp: i64 },

    #[error("non-constant step: gap of {gap_seconds} s after {after} with step {step_seconds} s")]
    NonConstantStep {
        after: i64,
        gap_seconds: i64,
        step_seconds: i64,
    },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("invalid site metadata: {0}")]
    InvalidMeta(String),

    #[error("empty partition after split")]
    EmptyPartition,

    #[error("invalid split specification: {0}")]
    InvalidSplit(String),

    #[error("series too short: need more than {required} points, have {available}")]
    SeriesTooShort { required: usize, available: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected} columns, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("missing clearsky reference")]
    MissingClearsky,

    #[error("no valid training data: {0}")]
    NoValidTraining(String),

    #[error("misaligned forecasts: {0}")]
    MisalignedForecasts(String),

    #[error("quantile regression did not converge after {iterations} iterations (objective {objective})")]
    NonConvergence { iterations: usize, objective: f64 },

    #[error("undefined normalization: mean observation is not positive")]
    UndefinedNormalization,

    #[error("crossing interval bounds at index {0}")]
    CrossingBounds(usize),

    #[error("empty sample")]
    EmptySample,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("all winner-takes-all runs produced non-finite validation loss")]
    AllRunsFailed,
}
