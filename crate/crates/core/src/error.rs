use thiserror::Error;

/// Errors surfaced by configuration parsing, run orchestration, and reporting.
///
/// Engine misuse (scheduling in the past, conservation breaches) is a logic
/// error and panics instead: a run that trips one must abort with a nonzero
/// exit, not limp on with bad data.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration; `field` names the offending scenario field.
    #[error("invalid configuration: {field}: {message}")]
    Config { field: String, message: String },

    /// Inputs that cannot be combined (mixed scenario hashes, defense mismatch).
    #[error("incompatible inputs: {0}")]
    Incompatible(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn parse(message: impl Into<String>) -> Self {
        Error::Parse(message.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
