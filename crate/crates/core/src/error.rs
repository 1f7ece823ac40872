use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{source_name}: row {row}: {reason}")]
    MalformedRow {
        source_name: String,
        row: usize,
        reason: String,
    },

    #[error("duplicate price record for node {node} at {timestamp}")]
    DuplicateKey { node: String, timestamp: String },

    #[error("invalid bid {bid_id}: {reason}")]
    InvalidBid { bid_id: String, reason: String },

    #[error("key mismatch: {0}")]
    KeyMismatch(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("missing data: {0}")]
    MissingData(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
