use std::path::PathBuf;

use attfis_core::anfis::AnfisError;
use attfis_core::pid::PidError;
use attfis_core::roles::RoleError;
use attfis_core::sim::SimError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("missing {what}: {path} does not exist")]
    MissingArtifact { what: &'static str, path: PathBuf },
    #[error("malformed {what} {path}: {message}")]
    Format { what: &'static str, path: PathBuf, message: String },
    #[error("{path}: unsupported {what} version {found} (this build reads version {expected})")]
    Version { what: &'static str, path: PathBuf, found: i64, expected: i64 },
    #[error("simulation failed: {0}")]
    Sim(#[from] SimError),
    #[error("ANFIS role: {0}")]
    Role(#[from] RoleError),
    #[error("ANFIS model: {0}")]
    Anfis(#[from] AnfisError),
    #[error("PID tuning: {0}")]
    Pid(#[from] PidError),
    #[error("worker pool: {0}")]
    Pool(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit status; each class of failure gets its own.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 3,
            Error::MissingArtifact { .. } => 4,
            Error::Format { .. } | Error::Version { .. } => 5,
            Error::Sim(_) | Error::Role(_) | Error::Anfis(_) | Error::Pid(_) | Error::Pool(_) => 6,
            Error::Io { .. } => 7,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
