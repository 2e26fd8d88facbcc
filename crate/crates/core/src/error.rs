use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("kernel is not integrable: {0}")]
    NonIntegrableKernel(String),

    #[error("invalid kernel profile: {0}")]
    InvalidKernel(String),

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("unsupported domain: {0}")]
    UnsupportedDomain(String),

    #[error("degenerate graph: {0}")]
    DegenerateGraph(String),

    #[error("grid too coarse: no cube of side {side} fits inside the domain")]
    GridTooCoarse { side: f64 },

    #[error("enumeration budget exceeded: n = {n}, limit = {limit}")]
    Budget { n: usize, limit: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed input in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}
