use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{}:{line}: {section}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        section: String,
        message: String,
    },

    #[error("unsupported format: {0}")]
    Unsupported(String),

    #[error("bundle size mismatch: manifest declares {expected} payload bytes, found {found}")]
    SizeMismatch { expected: u64, found: u64 },

    #[error("field `{name}` not found; available: {}", available.join(", "))]
    MissingField { name: String, available: Vec<String> },

    #[error("numerical degeneracy: {0}")]
    Numerical(String),

    #[error("ill-posed system: smallest singular value {sigma_min:e}")]
    IllPosed { sigma_min: f64 },

    #[error("degenerate sensor dictionary: every remaining functional vanishes on the residual")]
    DegenerateDictionary,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        });
    }
    Ok(())
}
