use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("zero-variance input: {0}")]
    ZeroVariance(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] neoscan_core::Error),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;
