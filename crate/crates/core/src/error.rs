use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} index {index} out of range (len {len})")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("consistency error: {0}")]
    Consistency(String),
    #[error("unbounded problem: {0}")]
    Unbounded(String),
    #[error("instance too large: {0}")]
    TooLarge(String),
    #[error("invalid `{field}`: {reason}")]
    Validation { field: String, reason: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Stable machine-readable category, used for CLI exit diagnostics.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Index { .. } => "index",
            Error::Domain(_) => "domain",
            Error::Consistency(_) => "consistency",
            Error::Unbounded(_) => "unbounded",
            Error::TooLarge(_) => "size",
            Error::Validation { .. } => "validation",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
        }
    }
}
