use thiserror::Error;

use super::QcReport;

#[derive(Debug, Error)]
pub enum ExprError {
    #[error("parse error in {source_name} at line {line}: {msg}")]
    Parse {
        source_name: String,
        line: usize,
        msg: String,
    },
    #[error("invalid value: {0}")]
    Validation(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("cell {cell} has zero total count")]
    ZeroTotal { cell: usize },
    #[error("quality control removed every cell")]
    EmptyResult { report: Box<QcReport> },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ExprError {
    pub(crate) fn parse(source_name: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        ExprError::Parse {
            source_name: source_name.into(),
            line,
            msg: msg.into(),
        }
    }
}
