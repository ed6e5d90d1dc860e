use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes are incompatible for the requested operation.
    #[error("dimension error: {0}")]
    Dim(String),
    /// The caller violated an operation's contract.
    #[error("usage error: {0}")]
    Usage(String),
    /// A forward op produced a non-finite value (overflow).
    #[error("non-finite value in {0}")]
    NonFinite(String),
    /// Invalid configuration (hyperparameters, file headers, regimes).
    #[error("configuration error: {0}")]
    Config(String),
    /// File format violation (bad magic, version, truncation).
    #[error("format error: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
