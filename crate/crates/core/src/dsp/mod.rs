//! Filters, resampling and spectral estimation.

mod design;
mod resample;
mod sos;
mod spectrum;

pub use design::{
    design_butterworth_bandpass, design_butterworth_bandpass_hz, design_chebyshev2_bandpass,
    design_notch, EdgeNormalization,
};
pub use resample::{resample_to_32hz, Resampler, RESAMPLE_DOWN, RESAMPLE_UP};
pub use sos::{filter_forward, filter_zero_phase, filter_zero_phase_padded, Extension, BiquadCascade, FilterState, Section};
pub use spectrum::{
    welch_psd, welch_psd_windowed, welch_psd_with, SpectralMethod, Spectrum, WelchConfig, Window,
};

use crate::error::Result;

/// The real-time preprocessing chain: fourth-order Butterworth bandpass
/// followed by 50 Hz and 100 Hz notches.
#[derive(Debug, Clone)]
pub struct PreprocessChain {
    pub bandpass: BiquadCascade,
    pub notches: Vec<BiquadCascade>,
}

impl PreprocessChain {
    pub const BANDPASS_ORDER: usize = 4;
    pub const BANDPASS_EDGES: (f64, f64) = (0.004, 0.4);
    pub const NOTCH_CENTERS_HZ: [f64; 2] = [50.0, 100.0];
    pub const NOTCH_BW_HZ: f64 = 4.0;

    pub fn new(fs_hz: f64, edges: EdgeNormalization) -> Result<Self> {
        let (lo, hi) = edges.to_cycles_per_sample(Self::BANDPASS_EDGES);
        let bandpass = design_butterworth_bandpass(Self::BANDPASS_ORDER, lo, hi)?;
        let notches = Self::NOTCH_CENTERS_HZ
            .iter()
            .filter(|&&c| c < fs_hz / 2.0)
            .map(|&c| design_notch(c, Self::NOTCH_BW_HZ, fs_hz))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { bandpass, notches })
    }

    /// The whole chain as a single cascade.
    pub fn cascade(&self) -> BiquadCascade {
        let mut sections = self.bandpass.sections().to_vec();
        for n in &self.notches {
            sections.extend_from_slice(n.sections());
        }
        BiquadCascade::new(sections)
    }
}
