use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("data integrity: {0}")]
    Integrity(String),

    #[error("no pairs: the corpus contains no ordered event-mention pairs")]
    NoPairs,

    #[error("{0}")]
    InvalidArgument(String),

    #[error("label {0} is a None label; None prototypes are built from the literal text \"None\" (use build_none_prototype)")]
    NoneLabelExamples(String),

    #[error("no examples available for label {0}")]
    MissingExamples(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("configuration invalid:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("encoder failure in window {window}: {message}")]
    Encoder { window: usize, message: String },

    #[error("training diverged at epoch {epoch}, step {step}: non-finite loss")]
    Divergence { epoch: usize, step: usize },

    #[error("mention universe mismatch: {0}")]
    Universe(String),

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { context: context.into(), source }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => 2,
            Error::Divergence { .. } => 4,
            _ => 3,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(Error::Config(vec!["x".into()]).exit_code(), 2);
        assert_eq!(Error::InvalidArgument("x".into()).exit_code(), 2);
        assert_eq!(Error::Parse { path: "a".into(), line: 3, message: "bad".into() }.exit_code(), 3);
        assert_eq!(Error::NoPairs.exit_code(), 3);
        assert_eq!(Error::Divergence { epoch: 1, step: 0 }.exit_code(), 4);
    }
}
