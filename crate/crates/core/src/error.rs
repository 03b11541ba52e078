use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("row {row}: {msg}")]
    Parse { row: usize, msg: String },
    #[error("calendar mismatch: {0}")]
    CalendarMismatch(String),
    #[error("empty date intersection across inputs")]
    EmptyIntersection,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("missing column: {0}")]
    MissingColumn(String),
    #[error("singular linear system: {0}")]
    Singular(String),
    #[error("failed to converge: {0}")]
    NonConvergence(String),
    #[error("insufficient history: {0}")]
    InsufficientHistory(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
