use thiserror::Error;

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("weight container: {0}")]
    Container(String),
    #[error("tensor {name}: {msg}")]
    Tensor { name: String, msg: String },
    #[error("model configuration: {0}")]
    Config(String),
    #[error("adjacency mismatch: {0}")]
    Adjacency(String),
    #[error("input: {0}")]
    Input(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] neoscan_core::Error),
}

pub type Result<T> = std::result::Result<T, DetectorError>;
