use std::path::{Path, PathBuf};

/// Errors of the command-line layer. Each maps to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] nvv_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    /// A file that exists but cannot be parsed.
    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error("{0}")]
    Usage(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
        move |source| Error::Io { path: path.to_path_buf(), source }
    }

    pub fn parse(path: &Path, msg: impl Into<String>) -> Error {
        Error::Parse { path: path.to_path_buf(), msg: msg.into() }
    }

    /// 2 for malformed inputs, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Core(nvv_core::Error::Format(_) | nvv_core::Error::Decode(_)) | Error::Parse { .. } => 2,
            _ => 1,
        }
    }
}
