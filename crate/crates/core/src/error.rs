use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::jobfile::JobfileError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library reports. Node and script names are root-relative.
#[derive(Debug, Error)]
pub enum Error {
    #[error("node `{node}`: {source}")]
    Jobfile {
        node: String,
        #[source]
        source: JobfileError,
    },

    #[error("target `{target}` resolves outside the experiment root")]
    PathEscape { target: String },

    #[error("node `{node}` does not exist or is not a directory")]
    MissingNode { node: String },

    #[error("node `{node}`: script `{script}` not found")]
    MissingScript { node: String, script: String },

    #[error("archive pattern `{pattern}` (declared in `{origin}`): {reason}")]
    BadPattern {
        pattern: String,
        origin: String,
        reason: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("cannot start `{program}`: {source}")]
    Spawn {
        program: String,
        #[source]
        source: io::Error,
    },

    #[error("node `{node}` is locked by another jobrunner process")]
    Busy { node: String },

    #[error("`{path}` already exists; refusing to overwrite")]
    Collision { path: String },

    #[error("entry `{entry}`: sha256 mismatch (expected {expected}, found {actual})")]
    HashMismatch {
        entry: String,
        expected: String,
        actual: String,
    },

    #[error("node `{node}` recorded in the capsule is absent from the restore root")]
    LayoutMismatch { node: String },

    #[error("corrupt capsule: {reason}")]
    CorruptCapsule { reason: String },

    #[error("`{}` is not empty", path.display())]
    NonEmptyRoot { path: PathBuf },

    #[error("invalid name `{name}`: {reason}")]
    InvalidName { name: String, reason: String },
}

/// Coarse error categories; the CLI maps each to a distinct exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorClass {
    Io,
    Usage,
    Jobfile,
    Missing,
    Execution,
    Collision,
    Capsule,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Jobfile { .. } | Error::BadPattern { .. } => ErrorClass::Jobfile,
            Error::PathEscape { .. } | Error::MissingNode { .. } | Error::MissingScript { .. } => {
                ErrorClass::Missing
            }
            Error::Io { .. } => ErrorClass::Io,
            Error::Spawn { .. } | Error::Busy { .. } => ErrorClass::Execution,
            Error::Collision { .. } => ErrorClass::Collision,
            Error::HashMismatch { .. }
            | Error::LayoutMismatch { .. }
            | Error::CorruptCapsule { .. } => ErrorClass::Capsule,
            Error::NonEmptyRoot { .. } | Error::InvalidName { .. } => ErrorClass::Usage,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Attach a path to a bare `io::Error`.
pub(crate) trait IoContext<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T>;
}

impl<T> IoContext<T> for io::Result<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T> {
        self.map_err(|e| Error::io(path, e))
    }
}
