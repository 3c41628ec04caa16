use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("index out of range: {what} = {index} (limit {limit})")]
    OutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("instance size overflow: {0}")]
    SizeOverflow(String),

    #[error("operation requires {expected} mode")]
    WrongMode { expected: &'static str },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("empty dataset at step {0}")]
    EmptyDataset(usize),

    #[error("degenerate hyperparameters: {0}")]
    DegenerateHyperparameters(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sampler exceeded {0} iterations")]
    SamplerRunaway(u64),

    #[error("linear solve failed: {0}")]
    Singular(String),

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
