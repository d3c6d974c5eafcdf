use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Core(#[from] sparse_diff::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl BenchError {
    /// Process exit code: 2 for I/O failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Io(_) => 2,
            BenchError::Core(sparse_diff::Error::Io(_)) => 2,
            BenchError::Csv(e) if e.is_io_error() => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = BenchError> = std::result::Result<T, E>;
