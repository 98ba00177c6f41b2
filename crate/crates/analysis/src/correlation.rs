use std::sync::OnceLock;

use ndarray::ArrayView2;

use neoscan_core::dsp::{design_chebyshev2_bandpass, filter_zero_phase, BiquadCascade};

use crate::error::{AnalysisError, Result};

pub const DEFAULT_MAX_LAG_S: f64 = 0.5;
pub const CORRELATION_BAND_HZ: (f64, f64) = (2.0, 30.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alignment {
    pub r: f64,
    /// Positive when `b` trails `a`.
    pub lag_s: f64,
    pub lag_samples: i64,
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(AnalysisError::Input(format!("series of length {} and {}", a.len(), b.len())));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return Err(AnalysisError::ZeroVariance("series is constant".into()));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson correlation at the lag within `±max_lag_s` that maximizes it.
pub fn aligned_correlation(a: &[f64], b: &[f64], fs_hz: f64, max_lag_s: f64) -> Result<Alignment> {
    if a.len() != b.len() {
        return Err(AnalysisError::Input(format!("lengths differ: {} vs {}", a.len(), b.len())));
    }
    let max_lag = ((max_lag_s * fs_hz).round() as i64).min(a.len() as i64 / 2).max(0);
    let mut best: Option<Alignment> = None;
    for lag in -max_lag..=max_lag {
        // b[t + lag] pairs with a[t]
        let (sa, sb) = if lag >= 0 {
            (&a[..a.len() - lag as usize], &b[lag as usize..])
        } else {
            (&a[(-lag) as usize..], &b[..b.len() - (-lag) as usize])
        };
        let r = pearson(sa, sb)?;
        if best.is_none_or(|x| r > x.r) {
            best = Some(Alignment { r, lag_s: lag as f64 / fs_hz, lag_samples: lag });
        }
    }
    best.ok_or_else(|| AnalysisError::Input("empty series".into()))
}

fn band_filter(fs_hz: f64) -> Result<BiquadCascade> {
    static AT_250: OnceLock<BiquadCascade> = OnceLock::new();
    let design = || design_chebyshev2_bandpass(6, CORRELATION_BAND_HZ.0, CORRELATION_BAND_HZ.1, 40.0, fs_hz);
    if fs_hz == 250.0 {
        if let Some(f) = AT_250.get() {
            return Ok(f.clone());
        }
        let f = design()?;
        return Ok(AT_250.get_or_init(|| f).clone());
    }
    Ok(design()?)
}

/// Rows filtered zero-phase with the 2-30 Hz Chebyshev II band-pass.
pub fn bandpass_2_30(x: ArrayView2<f64>, fs_hz: f64) -> Result<ndarray::Array2<f64>> {
    Ok(filter_zero_phase(&band_filter(fs_hz)?, x)?)
}

/// Filters both series to 2-30 Hz first.
pub fn aligned_correlation_filtered(a: &[f64], b: &[f64], fs_hz: f64, max_lag_s: f64) -> Result<Alignment> {
    let fa = bandpass_2_30(ArrayView2::from_shape((1, a.len()), a).unwrap(), fs_hz)?;
    let fb = bandpass_2_30(ArrayView2::from_shape((1, b.len()), b).unwrap(), fs_hz)?;
    aligned_correlation(fa.as_slice().unwrap(), fb.as_slice().unwrap(), fs_hz, max_lag_s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chirp(n: usize) -> Vec<f64> {
        (0..n).map(|i| (i as f64 * 0.05 + (i as f64 * 0.001).powi(2)).sin() + 0.3 * (i as f64 * 0.31).cos()).collect()
    }

    #[test]
    fn identical_series() {
        let a = chirp(2000);
        let r = aligned_correlation(&a, &a, 250.0, 0.5).unwrap();
        assert!((r.r - 1.0).abs() < 1e-12);
        assert_eq!(r.lag_samples, 0);
    }

    #[test]
    fn delayed_copy() {
        let a = chirp(5000);
        let b: Vec<f64> = (0..5000).map(|i| if i >= 25 { a[i - 25] } else { 0.0 }).collect();
        let r = aligned_correlation(&a, &b, 250.0, 0.5).unwrap();
        assert!((r.lag_s - 0.1).abs() < 1e-9, "{r:?}");
        assert!(r.r >= 0.99);
    }

    #[test]
    fn constant_input_is_an_error() {
        assert!(matches!(aligned_correlation(&[1.0; 100], &chirp(100), 250.0, 0.1), Err(AnalysisError::ZeroVariance(_))));
    }

    #[test]
    fn affine_invariance() {
        let a = chirp(1000);
        let b: Vec<f64> = a.iter().map(|v| v * 0.5 + (v * 3.0).sin()).collect();
        let b2: Vec<f64> = b.iter().map(|v| -2.0 * v + 7.0).collect();
        let a2: Vec<f64> = a.iter().map(|v| 3.0 * v - 1.0).collect();
        let r = pearson(&a, &b).unwrap();
        assert!((pearson(&a2, &b2).unwrap() + r).abs() < 1e-12);
    }
}
