use thiserror::Error;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged at update {update}: loss = {loss}")]
    Diverged { update: u64, loss: f64 },
    #[error("model has not been trained")]
    Untrained,
    #[error("incompatible models: {0}")]
    Incompatible(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
