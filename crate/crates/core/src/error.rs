use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read resource {path}: {source}")]
    Resource {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    #[error("invalid annotation{}: {message}", line.map(|l| format!(" on line {l}")).unwrap_or_default())]
    Annotation { line: Option<usize>, message: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("merge of nodes {a} and {b} rejected: {reason}")]
    MergeRejected { a: u32, b: u32, reason: &'static str },

    #[error("embedding provider failed: {0}")]
    Provider(String),

    #[error("unsupported format version {0}")]
    UnsupportedVersion(String),

    #[error("graph invariant violated: {0}")]
    Invariant(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(file: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            file: file.into(),
            line,
            message: message.into(),
        }
    }

    /// Coarse classification used for process exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Resource { .. } | Error::Provider(_) | Error::Io(_) => ErrorKind::Resource,
            Error::Stage { source, .. } => source.kind(),
            Error::Argument(_) => ErrorKind::Usage,
            _ => ErrorKind::Data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Resource,
}
