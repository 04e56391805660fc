use std::path::Path;

use obsalloc_core::Error as CoreError;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed input: {0}")]
    Format(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }

    /// Process exit status: 1 for usage, IO and format problems, 2 for
    /// numerical or precondition failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(_) => 2,
            _ => 1,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Io { .. } => "io",
            CliError::Format(_) => "format",
            CliError::Core(e) => e.code(),
        }
    }

    pub fn report(&self) -> ErrorReport {
        ErrorReport { code: self.code(), exit_code: self.exit_code(), message: self.to_string() }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Format(e.to_string())
    }
}

/// Machine-readable error body printed under `--error-json`.
#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub code: &'static str,
    pub exit_code: i32,
    pub message: String,
}
