use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("sequence of {len} tokens exceeds context length {context_len}")]
    SequenceTooLong { len: usize, context_len: usize },
    #[error("empty token sequence")]
    EmptySequence,
    #[error("token id {id} out of range for vocabulary of {vocab_size}")]
    InvalidToken { id: u32, vocab_size: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite loss {loss} at step {step}")]
    NonFiniteLoss { step: u64, loss: f64 },
    #[error("token budget must be positive")]
    ZeroBudget,
    #[error("no training data")]
    NoData,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
