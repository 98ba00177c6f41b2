use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::{EPOCH_SAMPLES, N_BIPOLAR, N_REFERENTIAL};

/// Largest positive value of a signed 24-bit ADC word.
pub const ADC_MAX: i32 = (1 << 23) - 1;
/// Most negative value of a signed 24-bit ADC word.
pub const ADC_MIN: i32 = -(1 << 23);

/// One 250 Hz instant as delivered by the front end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SampleFrame {
    pub seq: u32,
    /// Microseconds since session start.
    pub t_us: u64,
    /// Raw signed 24-bit ADC counts, one per referential channel.
    pub adc: [i32; N_REFERENTIAL],
    pub accel: [i16; 3],
    pub gyro: [i16; 3],
}

impl SampleFrame {
    pub fn adc_in_range(&self) -> bool {
        self.adc.iter().all(|&c| (ADC_MIN..=ADC_MAX).contains(&c))
    }
}

/// Multichannel time series in microvolts.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    fs_hz: f64,
    channels: Vec<String>,
    data: Array2<f64>,
    pub meta: BTreeMap<String, String>,
}

impl Recording {
    /// `data` is channels x samples.
    pub fn new(fs_hz: f64, channels: Vec<String>, data: Array2<f64>) -> Result<Self> {
        if !(fs_hz > 0.0 && fs_hz.is_finite()) {
            return Err(Error::InvalidArgument(format!("sampling rate {fs_hz} must be positive")));
        }
        if data.nrows() != channels.len() {
            return Err(Error::Shape(format!(
                "{} data rows for {} channel labels",
                data.nrows(),
                channels.len()
            )));
        }
        if let Some(((ch, idx), _)) = data.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { channel: ch, index: idx });
        }
        Ok(Self { fs_hz, channels, data, meta: BTreeMap::new() })
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<String>) -> Self {
        self.meta.insert(key.to_string(), value.into());
        self
    }

    pub fn fs_hz(&self) -> f64 {
        self.fs_hz
    }

    pub fn channels(&self) -> &[String] {
        &self.channels
    }

    pub fn data(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples() as f64 / self.fs_hz
    }

    pub fn channel_index(&self, label: &str) -> Option<usize> {
        self.channels.iter().position(|c| c.eq_ignore_ascii_case(label))
    }
}

/// A 12 x 384 model input window (32 Hz, 12 s).
#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    data: Array2<f64>,
    pub t_start_us: u64,
}

impl Epoch {
    pub fn new(data: Array2<f64>, t_start_us: u64) -> Result<Self> {
        if data.dim() != (N_BIPOLAR, EPOCH_SAMPLES) {
            return Err(Error::Shape(format!(
                "epoch must be {N_BIPOLAR}x{EPOCH_SAMPLES}, got {:?}",
                data.dim()
            )));
        }
        if let Some(((ch, idx), _)) = data.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { channel: ch, index: idx });
        }
        Ok(Self { data, t_start_us })
    }

    pub fn data(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn t_start_s(&self) -> f64 {
        self.t_start_us as f64 * 1e-6
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SeizureLabel {
    Seizure,
    NonSeizure,
}

/// Minimum annotated seizure time for a positive window.
pub const POSITIVE_LABEL_SECONDS: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLabel {
    pub label: SeizureLabel,
    pub seizure_seconds: f64,
}

impl EpochLabel {
    pub fn from_seizure_seconds(seizure_seconds: f64) -> Self {
        let label = if seizure_seconds >= POSITIVE_LABEL_SECONDS {
            SeizureLabel::Seizure
        } else {
            SeizureLabel::NonSeizure
        };
        Self { label, seizure_seconds }
    }

    pub fn is_seizure(&self) -> bool {
        self.label == SeizureLabel::Seizure
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recording_rejects_row_mismatch() {
        let err = Recording::new(250.0, vec!["a".into()], Array2::zeros((2, 10))).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn recording_rejects_nan() {
        let mut d = Array2::zeros((1, 10));
        d[[0, 7]] = f64::NAN;
        let err = Recording::new(250.0, vec!["a".into()], d).unwrap_err();
        assert!(matches!(err, Error::NonFinite { channel: 0, index: 7 }));
    }

    #[test]
    fn epoch_shape_is_enforced() {
        assert!(Epoch::new(Array2::zeros((12, 384)), 0).is_ok());
        assert!(Epoch::new(Array2::zeros((12, 383)), 0).is_err());
        assert!(Epoch::new(Array2::zeros((8, 384)), 0).is_err());
    }

    #[test]
    fn label_threshold() {
        assert!(EpochLabel::from_seizure_seconds(1.0).is_seizure());
        assert!(!EpochLabel::from_seizure_seconds(0.5).is_seizure());
    }
}
