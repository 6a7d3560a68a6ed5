use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input at a specific data row (1-based line number, header is line 1).
    #[error("{file}: row {row}: {message}")]
    Parse {
        file: String,
        row: usize,
        message: String,
    },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("value {value} outside domain [{start}, {end}]")]
    OutsideDomain { value: f64, start: f64, end: f64 },
    #[error("invalid basis: {0}")]
    Basis(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
