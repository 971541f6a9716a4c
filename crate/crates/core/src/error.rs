use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not satisfy an operation's contract.
    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    Dimension {
        op: String,
        expected: String,
        got: String,
    },

    /// A precondition on an argument was violated.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A file did not conform to its declared format.
    #[error("format error in {path}:{line}: {msg}")]
    Format {
        path: String,
        line: usize,
        msg: String,
    },

    /// Input data is structurally valid but semantically unusable.
    #[error("data error: {0}")]
    Data(String),

    /// Missing or inconsistent configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Training diverged or otherwise failed.
    #[error("training failure at epoch {epoch}, step {step}: {msg}")]
    Training {
        epoch: usize,
        step: usize,
        msg: String,
    },

    /// An API was called outside its documented contract.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn dimension(op: &str, expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::Dimension {
            op: op.to_string(),
            expected: expected.into(),
            got: got.into(),
        }
    }

    pub fn format(path: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
