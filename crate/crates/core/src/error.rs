use thiserror::Error;

/// Errors raised by the library. Each variant maps onto a fixed CLI exit
/// code and FFI status code (see [`Error::exit_code`]).
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown catalog model '{0}'")]
    UnknownModel(String),
    #[error("unknown class flag '{0}'")]
    UnknownClass(String),
    #[error("state diverged (non-finite) at t = {time}")]
    Divergence { time: f64 },
    #[error("trajectory grids do not match: {0}")]
    GridMismatch(String),
    #[error("non-positive error value at index {index}; use bound-envelope mode instead of a log-log fit")]
    NonPositiveError { index: usize },
    #[error("Picard iteration is not contracting after {iterations} iterations; try a larger lambda")]
    NonContraction { iterations: usize },
    #[error("missing model data: {0}")]
    MissingMetadata(String),
    #[error("model validation failed: {0}")]
    Validation(String),
    #[error("config error{}: {message}", at_line(*line))]
    Config { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Stable process exit code for the error family.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::UnknownModel(_) | Error::UnknownClass(_) => 2,
            Error::InvalidParameter(_) | Error::Domain(_) => 2,
            Error::Validation(_) | Error::MissingMetadata(_) => 3,
            Error::Divergence { .. } => 4,
            Error::Io(_) => 5,
            Error::GridMismatch(_) | Error::NonPositiveError { .. } | Error::NonContraction { .. } => 6,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

fn at_line(line: usize) -> String {
    if line == 0 {
        String::new()
    } else {
        format!(" at line {line}")
    }
}

pub type Result<T> = std::result::Result<T, Error>;
