//! Error type shared across the pipeline.

use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A record in an input file violates its schema. `location` carries
    /// file, line, and, where known, the offending column.
    #[error("{location}: {message}")]
    Malformed { location: String, message: String },

    /// The corpus as a whole is inconsistent (missing positions, duplicate
    /// items, design violations).
    #[error("invalid corpus: {0}")]
    Corpus(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    /// Difficulty calibration cannot proceed or did not finish.
    #[error("calibration: {0}")]
    Calibration(String),

    /// Training or selection hit a degenerate input (constant class, singular
    /// system, divergence).
    #[error("training: {0}")]
    Training(String),

    /// A CLI stage needs an artifact an earlier stage has not produced.
    #[error("missing artifact for stage `{stage}`: {message}")]
    MissingStage { stage: String, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn malformed(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Malformed {
            location: location.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
