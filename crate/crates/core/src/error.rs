use thiserror::Error;

/// Error type shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("segment count must be even and >= 2, got {0}")]
    OddSegmentCount(usize),

    #[error("cell count must be >= 1")]
    ZeroCells,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("challenge stream exhausted: needed {needed} kept bits, got {got}")]
    StreamExhausted { needed: usize, got: usize },

    #[error("database exhausted: requested {requested} unconsumed records, have {available}")]
    DatabaseExhausted { requested: usize, available: usize },

    #[error("session already finalized")]
    SessionFinalized,

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
