use std::path::PathBuf;

/// Errors raised anywhere in the generation, retrieval, and evaluation stack.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("sequence length {len} exceeds model maximum {max}")]
    SequenceTooLong { len: usize, max: usize },

    #[error("token id {id} at position {position} is outside the vocabulary of size {vocab_size}")]
    TokenOutOfVocab {
        id: u32,
        position: usize,
        vocab_size: usize,
    },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("degenerate embedding: {0}")]
    DegenerateEmbedding(String),

    #[error("degenerate distribution: every logit is -inf")]
    DegenerateDistribution,

    #[error("unmask budget {budget} exceeds {available} masked positions")]
    Budget { budget: usize, available: usize },

    #[error("strategy contract violated: {0}")]
    ContractViolation(String),

    #[error("training diverged at step {step}: loss {loss}")]
    TrainingDivergence { step: usize, loss: f64 },

    #[error("retrieval failed: {0}")]
    Retrieval(String),

    #[error("embedding request for batch {batch} timed out")]
    EmbedTimeout { batch: usize },

    #[error("embedding service returned a malformed response for batch {batch}: {reason}")]
    EmbedMalformed { batch: usize, reason: String },

    #[error("embedding dimension mismatch in batch {batch}: expected {expected}, got {actual}")]
    EmbedDimension {
        batch: usize,
        expected: usize,
        actual: usize,
    },

    #[error("embedding service error for batch {batch}: {reason}")]
    EmbedService { batch: usize, reason: String },

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("synthetic corpus generation failed: {0}")]
    Generation(String),

    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
