//! Error type shared by every stage of the pipeline.

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied value violates a precondition.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A file could not be parsed; names the offending cell when known.
    #[error("parse error in {path} (row {row}, column {col}): {msg}")]
    Parse {
        path: String,
        row: usize,
        col: usize,
        msg: String,
    },

    /// Input data is structurally valid but semantically unusable.
    #[error("data error: {0}")]
    Data(String),

    /// A numerical routine failed (singular system, non-finite value).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A simulated trajectory left its admissible region.
    #[error("dynamics diverged at step {step}: {msg}")]
    Dynamics { step: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
