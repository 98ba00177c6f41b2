use thiserror::Error;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("covariance is rank deficient (smallest eigenvalue {min_eig:.3e}); remove or repair channel {channel}")]
    RankDeficient { channel: usize, min_eig: f64 },
    #[error("invalid input: {0}")]
    Input(String),
    #[error("classifier: {0}")]
    Classifier(String),
    #[error(transparent)]
    Core(#[from] neoscan_core::Error),
    #[error(transparent)]
    Detector(#[from] neoscan_detector::DetectorError),
}

pub type Result<T> = std::result::Result<T, ArtifactError>;
