use thiserror::Error;

/// Unified error type for the toolkit. The CLI maps these onto exit codes,
/// so the variant chosen here is part of the contract: `InvalidInput` is a
/// caller mistake (usage), `Parse`/`Validation`/`Format` mean the data is
/// bad, `Io` means the filesystem failed us.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed textual input; `line` is 1-based within the offending file.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Structurally readable data that violates a documented invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// Malformed binary container (bad magic, truncated payload, ...).
    #[error("format error: {0}")]
    Format(String),

    /// Caller-side misuse of an API or CLI surface.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { line, msg: msg.into() }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub fn invalid_input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
