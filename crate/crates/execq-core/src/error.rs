use thiserror::Error;

/// Errors surfaced by the execution pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input data. Line numbers are 1-based and include the header.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Input violates a structural invariant (ordering, schema, version).
    #[error("validation error: {0}")]
    Validation(String),

    /// An argument is outside its documented range.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A value is outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An operation was called in a state that does not permit it.
    #[error("state error: {0}")]
    State(String),

    /// Training produced a non-finite quantity and was aborted.
    #[error("training error: {0}")]
    Training(String),

    /// The result is mathematically undefined for the given inputs.
    #[error("undefined result: {0}")]
    Undefined(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
