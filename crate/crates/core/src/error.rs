use std::fmt;

/// Errors shared by the numeric and synthesis layers.
#[derive(Debug)]
pub enum Error {
    /// Matrix or vector dimensions do not line up.
    Dimension(String),
    /// An input contained NaN or infinity.
    NonFinite(String),
    /// A matrix failed a required definiteness test.
    Definiteness(String),
    /// A matrix that must be invertible is numerically singular.
    Singular(String),
    /// A spectral-radius precondition (stability) is violated.
    Unstable(String),
    /// Malformed optimization problem (duplicate names, bad shapes, ...).
    Problem(String),
    /// Two independent numeric routes disagreed beyond tolerance.
    Numerical(String),
    /// File I/O.
    Io(std::io::Error),
    /// Text that could not be parsed (CSV, config values).
    Parse(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension(s) => write!(f, "dimension mismatch: {s}"),
            Error::NonFinite(s) => write!(f, "non-finite input: {s}"),
            Error::Definiteness(s) => write!(f, "definiteness violation: {s}"),
            Error::Singular(s) => write!(f, "singular matrix: {s}"),
            Error::Unstable(s) => write!(f, "unstable system: {s}"),
            Error::Problem(s) => write!(f, "malformed problem: {s}"),
            Error::Numerical(s) => write!(f, "numerical fault: {s}"),
            Error::Io(e) => write!(f, "i/o error: {e}"),
            Error::Parse(s) => write!(f, "parse error: {s}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
