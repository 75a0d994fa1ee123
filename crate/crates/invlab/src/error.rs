use std::path::PathBuf;

use thiserror::Error;

use crate::config::ConfigError;
use crate::snapshot::SnapshotError;

/// Errors raised by planning, execution, persistence and reporting.
#[derive(Debug, Error)]
pub enum InvlabError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error(transparent)]
    Snapshot(#[from] SnapshotError),

    #[error(transparent)]
    Core(#[from] invlab_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("report {table}: {message}")]
    Report { table: String, message: String },

    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, InvlabError>;

/// Attaches a path to an I/O error.
pub fn io_at(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> InvlabError {
    let path = path.into();
    move |source| InvlabError::Io { path, source }
}
