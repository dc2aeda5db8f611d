use thiserror::Error;

pub type Result<T> = std::result::Result<T, NeuralError>;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("unknown parameter {0:?}")]
    MissingParam(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("backward on an untracked value")]
    Untracked,
    #[error("missing embedding for {0:?}")]
    MissingEmbedding(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] hrce_core::CoreError),
    #[error("{0}")]
    Invalid(String),
}
