use thiserror::Error;

/// Errors raised across the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty corpus")]
    EmptyCorpus,

    #[error("clip length/rate mismatch: {0}")]
    ClipLengthMismatch(String),

    #[error("clip window exceeds recording: {0}")]
    WindowOutOfRange(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("token id {id} out of range (vocab size {vocab_size})")]
    TokenOutOfRange { id: usize, vocab_size: usize },

    #[error("decoder requires at least one query frame")]
    EmptyDecoderQuery,

    #[error("no conditioning modality")]
    NoConditioningModality,

    #[error("stage mismatch: expected checkpoint of stage {expected}, got stage {actual}")]
    StageMismatch { expected: u8, actual: u8 },

    #[error("checkpoint format error: {0}")]
    CheckpointFormat(String),

    #[error("checkpoint version mismatch: supported {supported}, found {found}")]
    CheckpointVersion { supported: u32, found: u32 },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("render error: {0}")]
    Render(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("wav error: {0}")]
    Wav(#[from] hound::Error),
}
