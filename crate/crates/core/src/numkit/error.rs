use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: String, detail: String },
    #[error("invalid tape state: {0}")]
    State(String),
    #[error("non-finite gradient for parameter `{name}`")]
    NonFiniteGradient { name: String },
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("invalid MLP spec: {0}")]
    Spec(String),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl NumError {
    pub(crate) fn shape(op: impl Into<String>, detail: impl Into<String>) -> Self {
        NumError::Shape {
            op: op.into(),
            detail: detail.into(),
        }
    }
}
