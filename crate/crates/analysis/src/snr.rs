//! Band-power signal-to-noise estimators.

use neoscan_core::dsp::{welch_psd, Spectrum};

use crate::error::{AnalysisError, Result};

pub const LINE_NOISE_BAND_HZ: (f64, f64) = (48.0, 52.0);
pub const POWERLINE_SIGNAL_BAND_HZ: (f64, f64) = (2.0, 90.0);
pub const ALPHA_BAND_HZ: (f64, f64) = (8.0, 13.0);
pub const ALPHA_REFERENCE_BAND_HZ: (f64, f64) = (2.0, 30.0);
/// Welch segment length.
pub const SNR_SEGMENT_S: f64 = 2.0;
/// A band whose power falls below this fraction of the other is treated as
/// empty and the ratio saturates to an infinite sentinel.
pub const POWER_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snr {
    pub db: f64,
    pub signal_power: f64,
    pub noise_power: f64,
    /// True when `db` is an infinite sentinel.
    pub saturated: bool,
}

impl Snr {
    pub fn from_powers(signal: f64, noise: f64) -> Self {
        let signal = signal.max(0.0);
        let noise = noise.max(0.0);
        if noise <= POWER_FLOOR * signal || (signal == 0.0 && noise == 0.0) {
            return Self { db: f64::INFINITY, signal_power: signal, noise_power: noise, saturated: true };
        }
        if signal <= POWER_FLOOR * noise {
            return Self { db: f64::NEG_INFINITY, signal_power: signal, noise_power: noise, saturated: true };
        }
        Self { db: 10.0 * (signal / noise).log10(), signal_power: signal, noise_power: noise, saturated: false }
    }
}

pub fn snr_spectrum(x: &[f64], fs_hz: f64) -> Result<Spectrum> {
    let seg = ((SNR_SEGMENT_S * fs_hz).round() as usize).min(x.len());
    if seg < 8 {
        return Err(AnalysisError::Input(format!("{} samples is too short", x.len())));
    }
    Ok(welch_psd(x, fs_hz, seg, 0.5)?)
}

/// Line-noise SNR: 2-90 Hz power outside 48-52 Hz against 48-52 Hz power.
pub fn snr_powerline(x: &[f64], fs_hz: f64) -> Result<Snr> {
    if fs_hz < 200.0 {
        return Err(AnalysisError::Input(format!("powerline SNR needs fs >= 200 Hz, got {fs_hz}")));
    }
    Ok(snr_powerline_from(&snr_spectrum(x, fs_hz)?))
}

pub fn snr_powerline_from(psd: &Spectrum) -> Snr {
    let noise = psd.band_power(LINE_NOISE_BAND_HZ.0, LINE_NOISE_BAND_HZ.1);
    let total = psd.band_power(POWERLINE_SIGNAL_BAND_HZ.0, POWERLINE_SIGNAL_BAND_HZ.1);
    Snr::from_powers(total - noise, noise)
}

/// Alpha SNR: 8-13 Hz power against the rest of 2-30 Hz.
pub fn snr_alpha(x: &[f64], fs_hz: f64) -> Result<Snr> {
    if fs_hz < 64.0 {
        return Err(AnalysisError::Input(format!("alpha SNR needs fs >= 64 Hz, got {fs_hz}")));
    }
    Ok(snr_alpha_from(&snr_spectrum(x, fs_hz)?))
}

pub fn snr_alpha_from(psd: &Spectrum) -> Snr {
    let signal = psd.band_power(ALPHA_BAND_HZ.0, ALPHA_BAND_HZ.1);
    let total = psd.band_power(ALPHA_REFERENCE_BAND_HZ.0, ALPHA_REFERENCE_BAND_HZ.1);
    Snr::from_powers(signal, total - signal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{PI, SQRT_2};

    fn tone(f: f64, rms: f64, n: usize, fs: f64) -> Vec<f64> {
        (0..n).map(|i| rms * SQRT_2 * (2.0 * PI * f * i as f64 / fs).sin()).collect()
    }

    fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x + y).collect()
    }

    #[test]
    fn pure_alpha_has_no_line_noise() {
        let s = snr_powerline(&tone(10.0, 20.0, 7500, 250.0), 250.0).unwrap();
        assert!(s.saturated && s.db == f64::INFINITY, "{s:?}");
    }

    #[test]
    fn twenty_db_line_ratio() {
        let x = add(&tone(10.0, 20.0, 7500, 250.0), &tone(50.0, 2.0, 7500, 250.0));
        let s = snr_powerline(&x, 250.0).unwrap();
        assert!((s.db - 20.0).abs() <= 0.5, "{s:?}");
    }

    #[test]
    fn equal_power_is_zero_db() {
        let x = add(&tone(10.0, 5.0, 7500, 250.0), &tone(50.0, 5.0, 7500, 250.0));
        assert!(snr_powerline(&x, 250.0).unwrap().db.abs() <= 0.5);
    }

    #[test]
    fn alpha_tone_signs() {
        assert!(snr_alpha(&tone(10.0, 10.0, 7500, 250.0), 250.0).unwrap().db > 20.0);
        assert!(snr_alpha(&tone(20.0, 10.0, 7500, 250.0), 250.0).unwrap().db < -10.0);
    }

    #[test]
    fn sampling_rate_preconditions() {
        assert!(snr_powerline(&[0.0; 1000], 128.0).is_err());
        assert!(snr_alpha(&[0.0; 1000], 32.0).is_err());
    }

    #[test]
    fn scale_invariant() {
        let x = add(&tone(10.0, 3.0, 5000, 250.0), &tone(50.0, 1.0, 5000, 250.0));
        let y: Vec<f64> = x.iter().map(|v| v * 37.0).collect();
        assert!((snr_powerline(&x, 250.0).unwrap().db - snr_powerline(&y, 250.0).unwrap().db).abs() < 1e-9);
    }
}
