use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Failure modes shared by every module of the core crate.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes are incompatible.
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    /// An index (word id, class label, node id) is out of range.
    Index {
        what: &'static str,
        index: usize,
        bound: usize,
    },
    /// Caller-supplied configuration or data cannot be used.
    Config(String),
    /// The tape was driven in an unsupported way.
    Usage(String),
    /// The input is mathematically degenerate (zero norm, zero projection).
    Degenerate(String),
    /// A parameter mutation was attempted on a frozen model.
    Frozen,
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { op, left, right } => write!(
                f,
                "shape mismatch in {op}: {}x{} vs {}x{}",
                left.0, left.1, right.0, right.1
            ),
            Error::Index { what, index, bound } => {
                write!(f, "{what} {index} out of range (bound {bound})")
            }
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Usage(msg) => write!(f, "usage error: {msg}"),
            Error::Degenerate(msg) => write!(f, "degenerate input: {msg}"),
            Error::Frozen => f.write_str("model is frozen; parameters cannot be mutated"),
        }
    }
}

impl core::error::Error for Error {}
