use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("no corpus files found in {0}")]
    NoCorpusFiles(PathBuf),
    #[error("invalid triple: {0}")]
    InvalidTriple(String),
    #[error("invalid sentence partition: {0}")]
    InvalidPartition(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("template parse error at token {position}: {message}")]
    Template { position: usize, message: String },
    #[error("entity tag ENTITY-{index} out of range: only {available} entities")]
    Binding { index: usize, available: usize },
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("length mismatch: {0} predictions vs {1} gold sets")]
    LengthMismatch(usize, usize),
    #[error("missing model: {0}")]
    MissingModel(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Neural(#[from] d2t_neural::NeuralError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
