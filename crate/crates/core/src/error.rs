use std::path::PathBuf;

/// Errors produced by pipeline operations.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected_w}x{expected_h}, got {got_w}x{got_h}")]
    DimensionMismatch {
        expected_w: usize,
        expected_h: usize,
        got_w: usize,
        got_h: usize,
    },

    /// An operation required a non-empty mask for the named structure.
    #[error("empty mask for {0}")]
    EmptyMask(&'static str),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed file contents; the message names the offending row or field.
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

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

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_same_dims(
    (ew, eh): (usize, usize),
    (gw, gh): (usize, usize),
) -> Result<()> {
    if (ew, eh) != (gw, gh) {
        return Err(Error::DimensionMismatch {
            expected_w: ew,
            expected_h: eh,
            got_w: gw,
            got_h: gh,
        });
    }
    Ok(())
}
