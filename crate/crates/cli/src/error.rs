use thiserror::Error;

use neoscan_analysis::AnalysisError;
use neoscan_artifact::ArtifactError;
use neoscan_detector::DetectorError;
use neoscan_stream::StreamError;

/// Stable process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Success = 0,
    Usage = 1,
    Io = 2,
    Protocol = 3,
    Numeric = 4,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("numeric: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::Usage,
            CliError::Io(_) => ExitCode::Io,
            CliError::Protocol(_) => ExitCode::Protocol,
            CliError::Numeric(_) => ExitCode::Numeric,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<neoscan_core::Error> for CliError {
    fn from(e: neoscan_core::Error) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<StreamError> for CliError {
    fn from(e: StreamError) -> Self {
        match e {
            StreamError::Protocol(m) => CliError::Protocol(m),
            StreamError::Io(e) => CliError::Io(e.to_string()),
            StreamError::Format(m) => CliError::Io(m),
            StreamError::Config(m) => CliError::Usage(m),
            StreamError::Core(e) => e.into(),
        }
    }
}

impl From<DetectorError> for CliError {
    fn from(e: DetectorError) -> Self {
        match e {
            DetectorError::Io(_) | DetectorError::Container(_) | DetectorError::Tensor { .. } => CliError::Io(e.to_string()),
            DetectorError::Config(_) | DetectorError::Adjacency(_) => CliError::Usage(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<ArtifactError> for CliError {
    fn from(e: ArtifactError) -> Self {
        match e {
            ArtifactError::Detector(d) => d.into(),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Input(m) => CliError::Usage(m),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}
