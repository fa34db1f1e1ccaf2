use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("tokenizer: {0}")]
    Tokenizer(String),

    #[error("sequence length {len} outside 1..={max}")]
    SequenceLength { len: usize, max: usize },

    #[error("token id {id} out of range for vocabulary of {vocab}")]
    TokenId { id: u32, vocab: usize },

    #[error("index out of range: {0}")]
    Index(String),

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error("training diverged at epoch {epoch}, step {step}: loss {loss}")]
    Diverged { epoch: usize, step: usize, loss: f64 },

    #[error("edit rejected: {0}")]
    Edit(String),

    #[error("degenerate key: (C^-1 k)^T k = {0:e}")]
    DegenerateKey(f64),

    #[error("subject {subject:?} not found in prompt {prompt:?}")]
    SubjectNotFound { subject: String, prompt: String },

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("case {case}: {msg}")]
    Case { case: i64, msg: String },

    #[error("metric: {0}")]
    Metric(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}
