use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty-dataset")]
    EmptyDataset,
    #[error("vector-length: expected {expected}, got {got}")]
    VectorLength { expected: usize, got: usize },
    #[error("no-previous-tasks")]
    NoPreviousTasks,
    #[error("degenerate-prior")]
    DegeneratePrior,
    #[error("not-absolutely-continuous: q has mass where p has none (index {0})")]
    NotAbsolutelyContinuous(usize),
    #[error("index-out-of-range: {what} {index} not below {limit}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },
    #[error("invalid-distribution: {0}")]
    InvalidDistribution(String),
    #[error("domain: {0}")]
    Domain(String),
    #[error("diverged: {0}")]
    Diverged(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(format!("json: {e}"))
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(format!("csv: {e}"))
    }
}

/// Fails with [`Error::VectorLength`] unless `got == expected`.
pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::VectorLength { expected, got })
    }
}
