use std::fmt;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type.
#[derive(Debug)]
pub enum Error {
    /// A precondition on an argument was violated (dimension mismatch,
    /// empty input, out-of-range index, arithmetic overflow).
    InvalidArgument(String),
    /// An internal numerical check failed (e.g. imaginary residue of a
    /// real convolution above tolerance).
    Numerical(String),
    /// Training produced a non-finite loss; reports the offending epoch.
    TrainingDiverged { epoch: usize },
    /// A run configuration cannot be satisfied (infeasible budget match,
    /// oversized full-bilinear baseline).
    Config(String),
    /// A file failed checksum validation, carries an unknown version, or
    /// could not be parsed.
    CorruptFile(String),
    /// Malformed command line; names the offending flag or command.
    Usage(String),
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Numerical(msg) => write!(f, "numerical error: {msg}"),
            Error::TrainingDiverged { epoch } => {
                write!(f, "training diverged: non-finite loss at epoch {epoch}")
            }
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::CorruptFile(msg) => write!(f, "corrupt file: {msg}"),
            Error::Usage(msg) => write!(f, "usage error: {msg}"),
            Error::Io(err) => write!(f, "io error: {err}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(err) => Some(err),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err)
    }
}

/// Shorthand for `Error::InvalidArgument` with a formatted message.
pub fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
