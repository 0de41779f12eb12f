use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad classification used by front ends to pick exit codes / HTTP statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    /// Bad input data or files.
    Data,
    /// Invalid request parameters or configuration.
    Config,
    /// Operation not available for this model.
    Capability,
    /// Something went wrong while computing.
    Execution,
    /// Persisted state is unreadable.
    Storage,
    /// The request clashes with the current experiment state.
    Conflict,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("column `{0}` not found")]
    MissingColumn(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("invalid configuration at `{path}`: {reason}")]
    InvalidConfig { path: String, reason: String },

    #[error("capability error: {0}")]
    Capability(String),

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("corrupted experiment file: {0}")]
    Corrupted(String),

    #[error("experiment schema version {found} cannot be migrated to supported version {supported}")]
    Migration { found: u32, supported: u32 },

    #[error("serialization error: {0}")]
    Serialization(String),

    #[error("conflict: {0}")]
    Conflict(String),
}

impl ErrorClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            ErrorClass::Data => "data",
            ErrorClass::Config => "config",
            ErrorClass::Capability => "capability",
            ErrorClass::Execution => "execution",
            ErrorClass::Storage => "storage",
            ErrorClass::Conflict => "conflict",
        }
    }
}

impl Error {
    pub fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. } | Error::Csv(_) | Error::Data(_) | Error::MissingColumn(_) => {
                ErrorClass::Data
            }
            Error::InvalidParameter { .. }
            | Error::InvalidConfig { .. }
            | Error::UnknownModel(_)
            | Error::Schema(_) => ErrorClass::Config,
            Error::Capability(_) => ErrorClass::Capability,
            Error::Numerical(_) | Error::Serialization(_) => ErrorClass::Execution,
            Error::Corrupted(_) | Error::Migration { .. } => ErrorClass::Storage,
            Error::Conflict(_) => ErrorClass::Conflict,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}
