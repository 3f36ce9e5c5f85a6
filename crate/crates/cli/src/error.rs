use std::path::Path;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: line {line}: {message}")]
    Parse { path: String, line: u64, message: String },

    #[error("{path}: row {row} has {found} columns, expected {expected}")]
    ColumnCountMismatch {
        path: String,
        /// 0-based index among data rows.
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] gsmooth_core::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Parse { .. } => "ParseError",
            CliError::ColumnCountMismatch { .. } => "ColumnCountMismatch",
            CliError::Io { .. } => "IoError",
            CliError::Usage(_) => "UsageError",
            CliError::Core(e) => e.kind(),
        }
    }

    /// `{"error": {"kind": …, "message": …}}`, printed on stderr before exit 2.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({ "error": { "kind": self.kind(), "message": self.to_string() } })
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
