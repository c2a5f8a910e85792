use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad shapes, flags or hyperparameters.
    #[error("configuration error: {0}")]
    Config(String),
    /// An operation was called out of order, e.g. backward before forward.
    #[error("state error: {0}")]
    State(String),
    #[error("data error: {0}")]
    Data(String),
    /// A loss or gradient became NaN/Inf.
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("incompatible checkpoint: {0}")]
    Checkpoint(String),
    /// The model lacks a requested capability (e.g. last layer is not a KAN layer).
    #[error("unsupported: {0}")]
    Capability(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Capability(_) | Error::State(_) => 2,
            Error::Data(_) | Error::Io { .. } => 3,
            Error::Numeric(_) => 4,
            Error::Checkpoint(_) => 5,
        }
    }
}
