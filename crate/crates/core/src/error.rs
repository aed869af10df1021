use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Malformed or inconsistent input data (dimensions, non-finite values, ids).
    #[error("invalid input: {0}")]
    Input(String),

    /// A precondition on the experiment layout failed (e.g. an empty arm).
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The normal-equation matrix is singular or numerically close to it.
    #[error("rank-deficient design (reciprocal condition {rcond:.3e}); offending columns: {}", columns.join(", "))]
    RankDeficient { columns: Vec<String>, rcond: f64 },

    /// A variance method was requested for an estimator family that does not define it.
    #[error("variance method {method} is not defined for estimator {family}")]
    MethodMismatch { method: String, family: String },

    /// Exhaustive enumeration would exceed the configured guard.
    #[error("enumeration of {count} assignments exceeds the guard of {limit}")]
    EnumerationTooLarge { count: u128, limit: u128 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Input(format!("csv: {e}"))
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(format!("json: {e}"))
    }
}
