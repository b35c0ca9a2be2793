use thiserror::Error;

/// Errors produced anywhere in the core crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("events cannot fit: {hops} events of width up to {max_width} need more than {n_frames} frames")]
    EventsCannotFit {
        hops: usize,
        max_width: usize,
        n_frames: usize,
    },
    #[error("query count {0} outside [1, 4]")]
    QueryCount(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid frame selection: {0}")]
    InvalidSelection(String),
    #[error("cannot draw {k} items from {n} candidates")]
    SampleSize { k: usize, n: usize },
    #[error("temperature must be positive, got {0}")]
    Temperature(f64),
    #[error("similarity entry {0} is not strictly positive")]
    NonPositive(f64),
    #[error("group of size {0} is too small, need at least 2")]
    GroupTooSmall(usize),
    #[error("group size mismatch: expected {expected}, got {got}")]
    GroupSize { expected: usize, got: usize },
    #[error("pass rate {0} outside [0, 1)")]
    PassRate(f64),
    #[error("forward cache does not match the current parameters")]
    StaleCache,
    #[error("missing checkpoint: {0}")]
    MissingCheckpoint(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("checkpoint format: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
