use std::fmt;

/// Errors produced by grid construction, field management, I/O and solver setup.
#[derive(Debug)]
pub enum Error {
    /// Grid dimensions or spacings violate the grid invariants.
    InvalidGrid(String),
    /// Boundary condition combination is malformed or unsupported here.
    InvalidBc(String),
    /// A field with this name is already registered.
    FieldExists(String),
    /// No field with this name is registered.
    NoSuchField(String),
    /// An array length does not match the grid.
    SizeMismatch { expected: usize, got: usize },
    /// A parameter value is out of its admissible range.
    InvalidParam(String),
    /// The problem declares no spectral stabilizer.
    NoSymbol(String),
    /// A buffer allocation failed (typically in the bench path).
    Alloc { bytes: usize },
    /// Underlying file I/O failure.
    Io(std::io::Error),
    /// Malformed file contents (sidecar, raw payload).
    Format(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidGrid(msg) => write!(f, "invalid grid: {msg}"),
            Error::InvalidBc(msg) => write!(f, "invalid boundary condition: {msg}"),
            Error::FieldExists(name) => write!(f, "field \"{name}\" already exists"),
            Error::NoSuchField(name) => write!(f, "no field named \"{name}\""),
            Error::SizeMismatch { expected, got } => {
                write!(f, "size mismatch: expected {expected} values, got {got}")
            }
            Error::InvalidParam(msg) => write!(f, "invalid parameter: {msg}"),
            Error::NoSymbol(name) => write!(
                f,
                "problem \"{name}\" declares no spectral stabilizer; use the explicit Euler stepper"
            ),
            Error::Alloc { bytes } => write!(f, "failed to allocate {bytes} bytes"),
            Error::Io(e) => write!(f, "io error: {e}"),
            Error::Format(msg) => write!(f, "malformed file: {msg}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
