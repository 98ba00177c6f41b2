use thiserror::Error;

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("file format error: {0}")]
    Format(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] neoscan_core::Error),
}

pub type Result<T> = std::result::Result<T, StreamError>;
