use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("detached input: {0}")]
    Detached(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("load error: {path}: {msg}")]
    Load { path: PathBuf, msg: String },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("partition error: {0}")]
    Partition(String),
    #[error("episode error: {0}")]
    Episode(String),
    #[error("training diverged at epoch {epoch} on graph {graph}")]
    Training { epoch: usize, graph: usize },
    #[error("config error: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short stable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::EmptyInput(_) => "empty_input",
            Error::Contract(_) => "contract",
            Error::Detached(_) => "detached",
            Error::Validation(_) => "validation",
            Error::Load { .. } => "load",
            Error::Parse { .. } => "parse",
            Error::Partition(_) => "partition",
            Error::Episode(_) => "episode",
            Error::Training { .. } => "training",
            Error::Config(_) => "config",
            Error::Checkpoint(_) => "checkpoint",
            Error::Io(_) => "io",
        }
    }
}

pub(crate) fn shape_err(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
