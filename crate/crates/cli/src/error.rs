use std::path::{Path, PathBuf};

use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] synthfetal_core::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no subjects found in {}", .0.display())]
    NoSubjects(PathBuf),
    #[error("{0}")]
    Usage(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{failed} of {total} samples failed; first: {first}")]
    SamplesFailed {
        failed: usize,
        total: usize,
        first: String,
    },
}

impl CliError {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn parse(path: impl AsRef<Path>, message: impl ToString) -> Self {
        CliError::Parse {
            path: path.as_ref().to_path_buf(),
            message: message.to_string(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Config(_) => "ConfigError",
            CliError::NoSubjects(_) => "NoSubjects",
            CliError::Usage(_) => "UsageError",
            CliError::Io { .. } => "IoError",
            CliError::Parse { .. } => "ParseError",
            CliError::SamplesFailed { .. } => "SamplesFailed",
        }
    }

    /// Single-line JSON record for stderr.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({ "error": self.kind(), "message": self.to_string() }).to_string()
    }
}
