use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates a documented constraint.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("config parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// Factorization or eigensolver failure. Carries whatever diagnostics
    /// were available about the offending matrix.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("{aborted} of {attempted} trials aborted, exceeding the 0.1% budget")]
    TooManyAborted { aborted: u64, attempted: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI, one per failure category.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parse { .. } => 3,
            Error::Dimension(_) | Error::Domain(_) | Error::Numerical(_) => 4,
            Error::InsufficientSamples { .. } | Error::TooManyAborted { .. } => 5,
            Error::Io(_) | Error::Json(_) => 6,
        }
    }
}
