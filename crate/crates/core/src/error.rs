use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// No finite plan satisfies the requested targets.
    #[error("unsatisfiable: {0}")]
    Unsatisfiable(String),

    /// A rate estimate was requested with no trials backing it.
    #[error("undefined estimate: {0}")]
    UndefinedEstimate(String),

    /// The sample source ran dry before a block could be filled.
    #[error("sample source exhausted: requested {requested} samples, {available} available")]
    SourceExhausted { requested: usize, available: usize },

    #[error("parse error in {path:?} at byte offset {offset}: {message}")]
    Parse {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    /// Samples that are NaN or infinite, by sample index.
    #[error("non-finite samples at indices {indices:?}")]
    NonFinite { indices: Vec<usize> },

    #[error("degenerate noise floor: {0}")]
    DegenerateFloor(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
