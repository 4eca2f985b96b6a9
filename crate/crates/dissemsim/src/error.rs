use std::path::PathBuf;

/// Errors raised by the experiments, file formats and front end.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] dissem_core::Error),
    #[error("invalid parameter `{name}`: {reason}")]
    Invalid { name: &'static str, reason: String },
    #[error("unknown network `{0}` (not a builtin name and no such file)")]
    UnknownNetwork(String),
    #[error("cannot read network file {path}: {source}")]
    NetworkFile {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed network file {path}: {reason}")]
    NetworkFormat { path: PathBuf, reason: String },
    #[error("cannot read config file {path}: {reason}")]
    ConfigFile { path: PathBuf, reason: String },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("CSV output: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON output: {0}")]
    Json(#[from] serde_json::Error),
    #[error("worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::Invalid {
        name,
        reason: reason.into(),
    }
}
