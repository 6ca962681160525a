use crate::NodeId;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no connected graph found after {attempts} attempts (edge probability too low?)")]
    ResampleBudgetExhausted { attempts: u32 },

    #[error("overlay is disconnected over alive nodes")]
    Disconnected,

    #[error("node {0} is not alive")]
    DeadNode(NodeId),

    #[error("initial placement cannot satisfy the per-node cap (unit {unit} of {size} bytes does not fit)")]
    PlacementOverflow { unit: usize, size: u64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
