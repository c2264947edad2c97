use std::path::PathBuf;

use spfts_core::CoreError;
use thiserror::Error;

use crate::pipeline::IngestError;

/// Top-level failure, grouped by process exit code.
#[derive(Debug, Error)]
pub enum AppError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error ({stage}): {message}")]
    Data {
        stage: &'static str,
        message: String,
    },
    #[error("numeric failure ({stage}): {message}")]
    Numeric {
        stage: &'static str,
        message: String,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Io { .. } => 1,
            Self::Config(_) => 2,
            Self::Data { .. } => 3,
            Self::Numeric { .. } => 4,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// Sorts a core error into the data, numeric or config bucket.
    pub fn from_core(stage: &'static str, err: CoreError) -> Self {
        match err {
            CoreError::Data(message) => Self::Data { stage, message },
            CoreError::Numeric(message) | CoreError::Undefined(message) => {
                Self::Numeric { stage, message }
            }
            CoreError::Sizing(m) | CoreError::Dimension(m) | CoreError::Parameter(m) => {
                Self::Config(format!("{stage}: {m}"))
            }
        }
    }

    pub fn from_ingest(err: IngestError) -> Self {
        match err {
            IngestError::Io { path, source } => Self::Io { path, source },
            other => Self::Data {
                stage: "ingest",
                message: other.to_string(),
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, AppError>;

/// Attaches a pipeline stage label to core results.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for spfts_core::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| AppError::from_core(stage, e))
    }
}
