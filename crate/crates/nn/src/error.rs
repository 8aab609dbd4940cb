use thiserror::Error;

pub type Result<T> = std::result::Result<T, NnError>;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    Shape { expected: Vec<usize>, actual: Vec<usize> },

    #[error("layer {index} ({layer}) does not compose with {prev}: {reason}")]
    Composition {
        index: usize,
        prev: String,
        layer: String,
        reason: String,
    },

    #[error("invalid layer parameters at {index}: {reason}")]
    InvalidLayer { index: usize, reason: String },

    #[error("non-finite activation produced by layer {index} ({layer})")]
    NonFinite { index: usize, layer: String },

    #[error("loss became NaN at epoch {epoch}, batch {batch}")]
    NanLoss { epoch: usize, batch: usize },

    #[error("invalid training configuration: {0}")]
    Config(String),

    #[error("invalid weight file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
