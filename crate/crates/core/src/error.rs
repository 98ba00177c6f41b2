use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    Shape(String),
    #[error("non-finite sample on channel {channel} at index {index}")]
    NonFinite { channel: usize, index: usize },
    #[error("filter design error: {0}")]
    Design(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("montage error: {0}")]
    Montage(String),
}

pub type Result<T> = std::result::Result<T, Error>;
