use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by the command-line driver to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Repository,
    Parse,
    Analysis,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("parse error in {what}: {detail}")]
    Parse { what: &'static str, detail: String },

    #[error("`{command}` failed: {diagnostic}")]
    Vcs { command: String, diagnostic: String },

    #[error("{path} does not exist at {rev}")]
    NotFound { path: String, rev: String },

    #[error("unknown revision {0}")]
    UnknownRevision(String),

    #[error("{0}")]
    Analysis(String),

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn parse(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Parse {
            what,
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Invalid(_) => ErrorKind::Config,
            Error::Vcs { .. } | Error::NotFound { .. } | Error::UnknownRevision(_) => {
                ErrorKind::Repository
            }
            Error::Parse { .. } | Error::Json(_) => ErrorKind::Parse,
            Error::Analysis(_) | Error::Degenerate(_) | Error::Csv(_) => ErrorKind::Analysis,
            Error::Io { .. } => ErrorKind::Config,
        }
    }
}
