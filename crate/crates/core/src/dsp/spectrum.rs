//! Welch power spectral density.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectralMethod {
    Periodogram,
    Welch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Window {
    /// Periodic Hann.
    #[default]
    Hann,
    Rectangular,
}

impl Window {
    fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Hann => (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect(),
            Window::Rectangular => vec![1.0; n],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WelchConfig {
    pub segment_s: f64,
    pub overlap: f64,
    pub window: Window,
}

impl Default for WelchConfig {
    fn default() -> Self {
        Self { segment_s: 2.0, overlap: 0.5, window: Window::Hann }
    }
}

impl WelchConfig {
    pub fn segment_len(&self, fs_hz: f64) -> usize {
        (self.segment_s * fs_hz).round() as usize
    }
}

/// One-sided power spectral density, µV²/Hz for µV input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub freqs_hz: Vec<f64>,
    pub power: Vec<f64>,
    pub method: SpectralMethod,
}

impl Spectrum {
    /// Bin spacing in Hz.
    pub fn df(&self) -> f64 {
        if self.freqs_hz.len() < 2 {
            0.0
        } else {
            self.freqs_hz[1] - self.freqs_hz[0]
        }
    }

    /// Integrated power over `[lo_hz, hi_hz]` by the trapezoid rule on the
    /// bin grid: interior bins count fully, bins on an edge count half.
    pub fn band_power(&self, lo_hz: f64, hi_hz: f64) -> f64 {
        let df = self.df();
        let tol = df * 1e-6;
        self.freqs_hz
            .iter()
            .zip(&self.power)
            .map(|(&f, &p)| {
                if f < lo_hz - tol || f > hi_hz + tol {
                    0.0
                } else if (f - lo_hz).abs() <= tol || (f - hi_hz).abs() <= tol {
                    0.5 * p
                } else {
                    p
                }
            })
            .sum::<f64>()
            * df
    }

    /// Sum of all bins times the bin width.
    pub fn total_power(&self) -> f64 {
        self.power.iter().sum::<f64>() * self.df()
    }

    pub fn peak_bin(&self) -> usize {
        self.power
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    /// Element-wise mean of spectra on the same grid.
    pub fn average(spectra: &[Spectrum]) -> Result<Spectrum> {
        let first = spectra.first().ok_or_else(|| Error::InvalidArgument("no spectra to average".into()))?;
        let mut power = vec![0.0; first.power.len()];
        for s in spectra {
            if s.freqs_hz != first.freqs_hz {
                return Err(Error::Shape("spectra on different frequency grids".into()));
            }
            for (acc, p) in power.iter_mut().zip(&s.power) {
                *acc += p;
            }
        }
        let n = spectra.len() as f64;
        power.iter_mut().for_each(|p| *p /= n);
        Ok(Spectrum { freqs_hz: first.freqs_hz.clone(), power, method: first.method })
    }
}

/// Welch estimate with a periodic Hann window and per-segment mean removal.
pub fn welch_psd(x: &[f64], fs_hz: f64, seg_len: usize, overlap: f64) -> Result<Spectrum> {
    welch_psd_windowed(x, fs_hz, seg_len, overlap, Window::Hann)
}

pub fn welch_psd_with(x: &[f64], fs_hz: f64, cfg: &WelchConfig) -> Result<Spectrum> {
    welch_psd_windowed(x, fs_hz, cfg.segment_len(fs_hz), cfg.overlap, cfg.window)
}

pub fn welch_psd_windowed(x: &[f64], fs_hz: f64, seg_len: usize, overlap: f64, window: Window) -> Result<Spectrum> {
    if x.is_empty() {
        return Err(Error::InvalidArgument("empty input to welch_psd".into()));
    }
    if seg_len == 0 || seg_len > x.len() {
        return Err(Error::InvalidArgument(format!(
            "segment length {seg_len} must be in 1..={}",
            x.len()
        )));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::InvalidArgument(format!("overlap {overlap} must be in [0, 1)")));
    }
    if !(fs_hz > 0.0) {
        return Err(Error::InvalidArgument("sampling rate must be positive".into()));
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { channel: 0, index: i });
    }
    let hop = ((seg_len as f64) * (1.0 - overlap)).round().max(1.0) as usize;
    let w = window.coefficients(seg_len);
    let scale = 1.0 / (fs_hz * w.iter().map(|v| v * v).sum::<f64>());
    let n_bins = seg_len / 2 + 1;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(seg_len);
    let mut acc = vec![0.0; n_bins];
    let mut buf = vec![Complex64::new(0.0, 0.0); seg_len];
    let mut n_seg = 0usize;
    let mut start = 0;
    while start + seg_len <= x.len() {
        let seg = &x[start..start + seg_len];
        let mean = seg.iter().sum::<f64>() / seg_len as f64;
        for ((b, &v), &wv) in buf.iter_mut().zip(seg).zip(&w) {
            *b = Complex64::new((v - mean) * wv, 0.0);
        }
        fft.process(&mut buf);
        for (k, a) in acc.iter_mut().enumerate() {
            let mut p = buf[k].norm_sqr() * scale;
            let nyquist = seg_len % 2 == 0 && k == seg_len / 2;
            if k != 0 && !nyquist {
                p *= 2.0;
            }
            *a += p;
        }
        n_seg += 1;
        start += hop;
    }
    acc.iter_mut().for_each(|a| *a /= n_seg as f64);
    let freqs_hz = (0..n_bins).map(|k| k as f64 * fs_hz / seg_len as f64).collect();
    let method = if n_seg == 1 { SpectralMethod::Periodogram } else { SpectralMethod::Welch };
    Ok(Spectrum { freqs_hz, power: acc, method })
}
