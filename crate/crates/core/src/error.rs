use std::path::PathBuf;

/// Errors raised anywhere in the navigation stack.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("malformed data in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit status: 2 usage or configuration, 3 unreadable or
    /// malformed data, 4 anything that failed while running.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) | Error::Usage(_) | Error::Scenario(_) | Error::Unsupported(_) => 2,
            Error::Format { .. } | Error::Io { .. } => 3,
            Error::Dimension { .. } | Error::Training(_) => 4,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
