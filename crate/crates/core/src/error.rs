//! Error types shared across the crate.

use std::fmt;
use std::io;

/// Errors produced by dataset handling, numerics, clustering, and training.
#[derive(Debug)]
pub enum Error {
    /// Array dimensions do not line up (vector length, layer shape, cache mismatch).
    Shape(String),
    /// A parameter is outside its admissible range.
    Domain(String),
    /// A non-finite value appeared where a finite one is required.
    Numeric(String),
    /// Input is degenerate (zero-norm vector, zero-variance coordinate).
    Degenerate(String),
    /// A file could not be parsed; carries the 1-based line number.
    Parse { line: usize, msg: String },
    /// File contents disagree with their own header.
    Integrity(String),
    /// A mini-batch could not be drawn (too few classes, no positive/negative).
    Sampling(String),
    /// A label is missing from the hybrid label system.
    Lookup(String),
    /// The two branches' target class spaces could not be aligned.
    Alignment(String),
    /// A caller violated an interface contract (e.g. unlabeled data where labels are required).
    Contract(String),
    /// A configuration key is missing or malformed.
    Config(String),
    Io(io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape(m) => write!(f, "shape error: {m}"),
            Error::Domain(m) => write!(f, "domain error: {m}"),
            Error::Numeric(m) => write!(f, "numeric error: {m}"),
            Error::Degenerate(m) => write!(f, "degenerate input: {m}"),
            Error::Parse { line, msg } => write!(f, "parse error at line {line}: {msg}"),
            Error::Integrity(m) => write!(f, "integrity error: {m}"),
            Error::Sampling(m) => write!(f, "sampling error: {m}"),
            Error::Lookup(m) => write!(f, "lookup error: {m}"),
            Error::Alignment(m) => write!(f, "alignment error: {m}"),
            Error::Contract(m) => write!(f, "contract error: {m}"),
            Error::Config(m) => write!(f, "config error: {m}"),
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<io::Error> for Error {
    fn from(e: io::Error) -> Self {
        Error::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
