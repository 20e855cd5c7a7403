//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A text input could not be parsed (CSV field count, non-numeric field).
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Event timestamps went backwards in a stream that must be ordered.
    #[error("timestamp order violation at line {line}: {t} < {prev}")]
    Order { line: usize, t: u64, prev: u64 },

    /// A binary or structured payload is not in the expected format.
    #[error("format error: {0}")]
    Format(String),

    /// A value violates a domain invariant (degenerate bbox, bad polarity).
    #[error("invalid value: {0}")]
    Value(String),

    /// Configuration is inconsistent (e.g. tracking rate below frame rate).
    #[error("configuration error: {0}")]
    Config(String),

    /// A mask would contain no nonzero cells.
    #[error("empty mask: no nonzero cells inside the region")]
    EmptyMask,

    /// A template does not fit inside the field it is matched against.
    #[error("size error: {0}")]
    Size(String),

    /// A numeric procedure failed (non-convergence, vanishing denominator).
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for anything wrong with the inputs,
    /// 3 for numeric failures inside an otherwise valid run.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Numeric(_) => 3,
            _ => 2,
        }
    }
}
