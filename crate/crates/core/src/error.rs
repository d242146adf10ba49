use std::path::PathBuf;

/// Error type shared by all core modules.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A precondition on an argument was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Two grids that must be congruent have different dimensions.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A linear system or matrix inversion lost rank.
    #[error("numeric degeneracy: {0}")]
    NumericDegeneracy(String),

    /// An internal contract between operations was broken (e.g. a stale
    /// forward cache handed to backward).
    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// Non-finite values where finite ones are required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("unsupported format in {path}: {reason}")]
    UnsupportedFormat { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("manifest error: {0}")]
    Manifest(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
