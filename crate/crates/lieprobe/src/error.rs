use std::io;
use std::path::{Path, PathBuf};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] lieprobe_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: format error at byte {offset}: {message}", path.display())]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{what} not found: {}", path.display())]
    Missing { what: &'static str, path: PathBuf },
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Experiment(String),
}

impl Error {
    pub fn io(path: &Path, source: io::Error) -> Self {
        if source.kind() == io::ErrorKind::NotFound {
            return Error::Missing {
                what: "file",
                path: path.to_path_buf(),
            };
        }
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.to_path_buf(),
            offset,
            message: message.into(),
        }
    }

    /// Process exit code: 2 for anything the caller can fix by changing
    /// arguments or inputs, 1 for failures of the experiment itself.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Missing { .. } | Error::Parse { .. } => 2,
            Error::Core(lieprobe_core::Error::Config(_)) => 2,
            _ => 1,
        }
    }
}
