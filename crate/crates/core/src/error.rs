use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("out of range: {0}")]
    Range(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("constraint violated: {0}")]
    Constraint(String),
    /// A formula that needs an even environment (or effect) was handed an odd one.
    #[error("evenness violated: {0}")]
    NotEven(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("resource guard: {0}")]
    Resource(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Prefixes the message with where the failure happened, keeping the kind.
    pub fn context(self, what: &str) -> Error {
        let add = |s: String| format!("{what}: {s}");
        match self {
            Error::Range(s) => Error::Range(add(s)),
            Error::Shape(s) => Error::Shape(add(s)),
            Error::Constraint(s) => Error::Constraint(add(s)),
            Error::NotEven(s) => Error::NotEven(add(s)),
            Error::Usage(s) => Error::Usage(add(s)),
            Error::Resource(s) => Error::Resource(add(s)),
            Error::Numeric(s) => Error::Numeric(add(s)),
            Error::Parse(s) => Error::Parse(add(s)),
            Error::Io(s) => Error::Io(add(s)),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
