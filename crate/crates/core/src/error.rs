use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("sequence of length {len} exceeds max_positions {max}")]
    LengthOverflow { len: usize, max: usize },

    #[error("token id {id} out of range for vocabulary of size {vocab}")]
    TokenOutOfRange { id: usize, vocab: usize },

    #[error("non-finite value produced by `{op}`")]
    NonFinite { op: &'static str },

    #[error("backward already ran on this tape")]
    TapeConsumed,

    #[error("loss must be a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),

    #[error("loss mask selects no positions")]
    EmptyMask,

    #[error("unknown differentiable op `{0}`")]
    UnknownOp(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("memory archive is empty")]
    EmptyArchive,

    #[error("document has no segments")]
    EmptyDocument,

    #[error("fact count {n} outside [{min}, {max}] for {task}")]
    FactBounds { task: String, n: usize, min: usize, max: usize },

    #[error("could not generate a well-posed {task} sample after {attempts} attempts")]
    RetryBudget { task: String, attempts: usize },

    #[error("unknown task `{0}` (valid tasks: qa1, qa2, qa3, qa4, qa5)")]
    UnknownTask(String),

    #[error("question cannot be answered from the facts: {0}")]
    Unanswerable(String),

    #[error("could not parse fact `{0}`")]
    UnparsableFact(String),

    #[error("token budget {budget} is smaller than facts plus question ({needed} tokens)")]
    Budget { budget: usize, needed: usize },

    #[error("background corpus exhausted")]
    CorpusExhausted,

    #[error("background corpus is empty")]
    EmptyCorpus,

    #[error("facts do not fit in quartile {quartile}: {reason}")]
    Quartile { quartile: usize, reason: String },

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("index {index} out of range ({len} available)")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("training diverged at step {step}: {reason}")]
    Diverged { step: usize, reason: String },

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
