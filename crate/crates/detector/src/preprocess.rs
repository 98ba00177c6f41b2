use std::sync::OnceLock;

use ndarray::{Array2, ArrayView2};

use neoscan_core::dsp::{design_butterworth_bandpass_hz, filter_zero_phase_padded, BiquadCascade, Extension, Resampler};
use neoscan_core::{Epoch, DEVICE_FS_HZ, EPOCH_SECONDS, N_BIPOLAR};

use crate::error::{DetectorError, Result};

pub const MODEL_BAND_HZ: (f64, f64) = (1.0, 16.0);
pub const MODEL_FILTER_ORDER: usize = 4;
/// Reflection length for the zero-phase pass, two seconds at the device rate.
pub const MODEL_FILTER_PAD: usize = 500;

/// Samples in one raw epoch at the device rate.
pub const RAW_EPOCH_SAMPLES: usize = EPOCH_SECONDS * DEVICE_FS_HZ as usize;

pub fn model_bandpass() -> &'static BiquadCascade {
    static F: OnceLock<BiquadCascade> = OnceLock::new();
    F.get_or_init(|| {
        design_butterworth_bandpass_hz(MODEL_FILTER_ORDER, MODEL_BAND_HZ.0, MODEL_BAND_HZ.1, DEVICE_FS_HZ)
            .expect("model band is valid")
    })
}

/// Per-row z-score; constant rows become zero.
pub fn zscore_rows(x: &mut Array2<f64>) {
    for mut row in x.rows_mut() {
        let n = row.len() as f64;
        let mean = row.sum() / n;
        let sd = (row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        if sd > 0.0 {
            row.mapv_inplace(|v| (v - mean) / sd);
        } else {
            row.fill(0.0);
        }
    }
}

/// 12 x 3000 bipolar samples at 250 Hz to a 12 x 384 model epoch:
/// zero-phase 1-16 Hz band-pass with mirrored edges, 32 Hz resampling,
/// optional z-score.
pub fn preprocess_for_model(raw: ArrayView2<f64>, t_start_us: u64, zscore: bool) -> Result<Epoch> {
    if raw.dim() != (N_BIPOLAR, RAW_EPOCH_SAMPLES) {
        return Err(DetectorError::Input(format!(
            "raw epoch must be {N_BIPOLAR}x{RAW_EPOCH_SAMPLES}, got {:?}",
            raw.dim()
        )));
    }
    let filtered = filter_zero_phase_padded(model_bandpass(), raw, MODEL_FILTER_PAD, Extension::Even)?;
    let mut x = Resampler::default_32hz().process_rows(filtered.view())?;
    if zscore {
        zscore_rows(&mut x);
    }
    Ok(Epoch::new(x, t_start_us)?)
}
