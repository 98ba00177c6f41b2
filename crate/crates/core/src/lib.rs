//! Core building blocks for the neoscan EEG engine.
//!
//! * [`types`]: sample frames, recordings, model epochs and their labels.
//! * [`units`]: ADC count to microvolt conversion for the 24-bit front end.
//! * [`epoch`]: 12 s window segmentation, labeling and the persistence rule
//!   that turns per-epoch probabilities into seizure events.
//! * [`dsp`]: IIR design (Butterworth, Chebyshev II, notch), streaming
//!   second-order-section filtering, 250 to 32 Hz resampling and Welch PSD.
//! * [`montage`]: electrode geometry, bipolar derivation and the channel
//!   graph consumed by the graph attention layers.

pub mod dsp;
pub mod epoch;
pub mod error;
pub mod montage;
pub mod types;
pub mod units;

pub use error::{Error, Result};
pub use types::{Epoch, EpochLabel, Recording, SampleFrame, SeizureLabel};

/// Native sampling rate of the acquisition front end.
pub const DEVICE_FS_HZ: f64 = 250.0;
/// Sampling rate of the model input.
pub const MODEL_FS_HZ: f64 = 32.0;
/// Model epoch length in seconds.
pub const EPOCH_SECONDS: usize = 12;
/// Samples per model epoch at [`MODEL_FS_HZ`].
pub const EPOCH_SAMPLES: usize = 384;
/// Number of bipolar channels in the reduced montage.
pub const N_BIPOLAR: usize = 12;
/// Number of referential channels digitized by the front end.
pub const N_REFERENTIAL: usize = 8;
