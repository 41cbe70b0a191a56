use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("n-gram order must be at least 1, got {0}")]
    InvalidNgramOrder(usize),

    #[error("cannot average an empty list of scores")]
    EmptyAverage,

    #[error("max_len must be at least 4, got {0}")]
    MaxLenTooSmall(usize),

    #[error("k must be at least 1")]
    InvalidK,

    #[error("max_new_tokens must be at least 1")]
    InvalidMaxNewTokens,

    #[error("beam width must be at least 1")]
    InvalidBeamWidth,

    #[error("target of {target} tokens exceeds max_total {max_total}")]
    TargetTooLong { target: usize, max_total: usize },

    #[error("variant {variant} for document {doc_id}: {reason}")]
    MissingConditionPart { variant: &'static str, doc_id: String, reason: String },

    #[error("no training examples")]
    EmptyTrainingSet,

    #[error("non-finite loss {loss} at step {step}")]
    NonFiniteLoss { step: usize, loss: f64 },

    #[error("invalid training config: {0}")]
    InvalidConfig(String),

    #[error("translation failed on sentence {index}: {message}")]
    Translation { index: usize, message: String },

    #[error("missing selection for test document {0}")]
    MissingSelection(String),

    #[error("unknown document {0}")]
    UnknownDocument(String),

    #[error("sentence index {index} out of range for document {doc_id}")]
    SentenceOutOfRange { doc_id: String, index: usize },

    #[error("parameter shape mismatch for {name}: expected {expected_rows}x{expected_cols}, got {rows}x{cols}")]
    ShapeMismatch {
        name: String,
        expected_rows: usize,
        expected_cols: usize,
        rows: usize,
        cols: usize,
    },

    #[error("unknown parameter {0}")]
    UnknownParameter(String),
}
