use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input data contains non-finite values or has an unusable shape.
    #[error("data quality: {0}")]
    DataQuality(String),

    #[error("capacity: {0}")]
    Capacity(String),

    #[error("index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },

    /// A precondition of the called operation does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("singular core matrix: {0}; consider a positive regularizer (mu > 0) as jitter")]
    Singular(String),

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("determinant underflow: {0}; use the Schur-complement form instead")]
    DeterminantUnderflow(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported kernel family: {0}")]
    UnsupportedFamily(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the CLI: 2 for configuration/input problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Singular(_)
            | Error::Factorization(_)
            | Error::DeterminantUnderflow(_)
            | Error::Domain(_)
            | Error::Capacity(_) => 3,
            _ => 2,
        }
    }
}
