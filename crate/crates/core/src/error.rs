use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced at module boundaries.
///
/// Contract violations deep inside the numeric kernel (shape mismatches,
/// over-masked softmax rows, asymmetric eigensolver input) panic with a
/// descriptive message instead; everything reachable from user input flows
/// through this type so the CLI can map it to an exit code.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration; `pointer` is a JSON-pointer-style path into the
    /// offending document.
    #[error("config error at `{pointer}`: {message}")]
    Config { pointer: String, message: String },

    /// Malformed dataset file; points at the file and 1-based line.
    #[error("{file}:{line}: {message}")]
    Format {
        file: String,
        line: usize,
        message: String,
    },

    /// A metric has no defined value for the given inputs.
    #[error("metric undefined for task `{task}`: {message}")]
    UndefinedMetric { task: String, message: String },

    /// A correlation matrix failed the positive-semidefiniteness check.
    #[error("correlation matrix is not positive semidefinite: {0}")]
    NotPsd(String),

    /// Non-finite values appeared where finite ones were promised.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A cross-module contract was violated (mismatched task lists, empty
    /// splits, bad checkpoint/schema pairing, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            pointer: pointer.into(),
            message: message.into(),
        }
    }

    pub fn format(file: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            file: file.into(),
            line,
            message: message.into(),
        }
    }
}
