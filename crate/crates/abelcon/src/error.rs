use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("unknown operation `{0}`")]
    UnknownOperation(String),

    #[error("arity mismatch for `{name}`: expected {expected}, got {got}")]
    ArityMismatch {
        name: String,
        expected: usize,
        got: usize,
    },

    #[error("element out of range: {element} (universe size {size})")]
    OutOfRange { element: usize, size: usize },

    #[error("table length mismatch for `{name}`: expected {expected}, got {got}")]
    TableLength {
        name: String,
        expected: usize,
        got: usize,
    },

    #[error("signature mismatch")]
    SignatureMismatch,

    #[error("size mismatch: {0} vs {1}")]
    SizeMismatch(usize, usize),

    #[error("not a congruence: {0}")]
    NotCongruence(String),

    #[error("cap exceeded: {cap} (limit {limit})")]
    CapExceeded { cap: &'static str, limit: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("internal inconsistency: {0}")]
    Internal(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub(crate) fn internal(msg: impl Into<String>) -> Error {
    Error::Internal(msg.into())
}

pub(crate) fn precondition(msg: impl Into<String>) -> Error {
    Error::Precondition(msg.into())
}
