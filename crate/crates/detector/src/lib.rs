//! CNN-GAT seizure detector.
//!
//! [`CnnGat`] loads from a [`WeightContainer`], scores 12 x 384 epochs and
//! exposes the activations needed by [`grad_cam`]. [`BandPowerOracle`] is a
//! weight-free fixture with the same [`Detector`] interface.

pub mod config;
pub mod container;
pub mod error;
pub mod fixture;
pub mod gradcam;
pub mod model;
pub mod preprocess;

pub use config::{ModelConfig, ResBlockConfig, TensorSpec};
pub use container::{Tensor, WeightContainer};
pub use error::{DetectorError, Result};
pub use fixture::BandPowerOracle;
pub use gradcam::{grad_cam, relevance, Relevance};
pub use model::{adjacency_hash, init_container, CnnGat, EncoderActivations, ForwardOutput, GatLayer};
pub use preprocess::{preprocess_for_model, RAW_EPOCH_SAMPLES};

use neoscan_core::Epoch;

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probability: f64,
    pub relevance: Option<Relevance>,
}

/// Anything that turns a model epoch into a seizure probability.
pub trait Detector: Send + Sync {
    fn predict(&self, epoch: &Epoch) -> Result<Prediction>;

    /// Whether epochs should be z-scored before [`Detector::predict`].
    fn wants_zscore(&self) -> bool {
        false
    }
}

impl Detector for CnnGat {
    fn predict(&self, epoch: &Epoch) -> Result<Prediction> {
        let (out, rel) = grad_cam(self, epoch)?;
        Ok(Prediction { probability: out.probability, relevance: Some(rel) })
    }

    fn wants_zscore(&self) -> bool {
        self.zscore()
    }
}

impl Detector for BandPowerOracle {
    fn predict(&self, epoch: &Epoch) -> Result<Prediction> {
        Ok(Prediction { probability: self.probability(epoch)?, relevance: None })
    }
}
