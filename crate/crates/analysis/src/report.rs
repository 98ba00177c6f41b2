//! Two-device quality reports over labeled state segments.

use std::fmt::{self, Write as _};

use ndarray::s;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use neoscan_core::dsp::Spectrum;
use neoscan_core::Recording;

use crate::correlation::{aligned_correlation, bandpass_2_30, DEFAULT_MAX_LAG_S};
use crate::error::{AnalysisError, Result};
use crate::snr::{snr_alpha_from, snr_powerline_from, snr_spectrum, Snr};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum State {
    EyesOpen,
    EyesClosed,
    Seizure,
    Custom(String),
}

impl State {
    pub const STANDARD: [State; 3] = [State::EyesOpen, State::EyesClosed, State::Seizure];

    pub fn parse(label: &str) -> Self {
        match label.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "eyes-open" | "eyes-opened" | "eo" => State::EyesOpen,
            "eyes-closed" | "ec" => State::EyesClosed,
            "seizure" | "sz" => State::Seizure,
            _ => State::Custom(label.trim().to_string()),
        }
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            State::EyesOpen => f.write_str("eyes-open"),
            State::EyesClosed => f.write_str("eyes-closed"),
            State::Seizure => f.write_str("seizure"),
            State::Custom(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateSegment {
    pub t_start_s: f64,
    pub t_end_s: f64,
    pub state: State,
}

impl StateSegment {
    pub fn new(t_start_s: f64, t_end_s: f64, state: State) -> Self {
        Self { t_start_s, t_end_s, state }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportConfig {
    pub max_lag_s: f64,
    /// Band-pass both devices to 2-30 Hz before correlating.
    pub prefilter: bool,
    pub bootstrap_resamples: usize,
    pub confidence: f64,
    pub seed: u64,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self { max_lag_s: DEFAULT_MAX_LAG_S, prefilter: true, bootstrap_resamples: 1000, confidence: 0.95, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateSummary {
    pub state: State,
    pub n_segments: usize,
    /// Correlations over (segment x channel).
    pub correlations: Vec<f64>,
    pub mean_r: f64,
    pub ci: (f64, f64),
    /// Welch spectra averaged over segments and channels, one per device.
    pub spectra: [Spectrum; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrPair {
    pub powerline_db: f64,
    pub alpha_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceSnr {
    pub device: String,
    pub overall: SnrPair,
    pub by_channel: Vec<(String, SnrPair)>,
    pub by_segment: Vec<(usize, SnrPair)>,
    /// Samples whose ratio hit an infinite sentinel; excluded from means.
    pub saturated: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityReport {
    pub devices: [String; 2],
    pub channels: Vec<String>,
    pub states: Vec<StateSummary>,
    pub snr: [DeviceSnr; 2],
    pub notices: Vec<String>,
}

impl QualityReport {
    pub fn state(&self, s: &State) -> Option<&StateSummary> {
        self.states.iter().find(|x| &x.state == s)
    }

    pub fn correlation_tsv(&self) -> String {
        let mut out = String::from("state\tsegments\tsamples\tmean_r\tci_low\tci_high\n");
        for s in &self.states {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}",
                s.state,
                s.n_segments,
                s.correlations.len(),
                s.mean_r,
                s.ci.0,
                s.ci.1
            );
        }
        out
    }

    pub fn snr_tsv(&self) -> String {
        let mut out = String::from("device\tscope\tkey\tpowerline_db\talpha_db\n");
        for d in &self.snr {
            let row = |out: &mut String, scope: &str, key: &str, p: &SnrPair| {
                let _ = writeln!(out, "{}\t{scope}\t{key}\t{:.3}\t{:.3}", d.device, p.powerline_db, p.alpha_db);
            };
            row(&mut out, "overall", "all", &d.overall);
            for (c, p) in &d.by_channel {
                row(&mut out, "channel", c, p);
            }
            for (k, p) in &d.by_segment {
                row(&mut out, "segment", &k.to_string(), p);
            }
        }
        out
    }

    /// Plot data for one state: frequency and the two device spectra.
    pub fn spectra_tsv(&self, state: &State) -> Option<String> {
        let s = self.state(state)?;
        let mut out = format!("freq_hz\t{}\t{}\n", self.devices[0], self.devices[1]);
        for (i, f) in s.spectra[0].freqs_hz.iter().enumerate() {
            let _ = writeln!(out, "{f:.4}\t{:.6e}\t{:.6e}", s.spectra[0].power[i], s.spectra[1].power[i]);
        }
        Some(out)
    }
}

/// Percentile bootstrap interval of the mean.
pub fn bootstrap_mean_ci(x: &[f64], resamples: usize, confidence: f64, seed: u64) -> (f64, f64) {
    if x.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = x.len();
    let mut means: Vec<f64> = (0..resamples.max(1))
        .map(|_| (0..n).map(|_| x[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let alpha = (1.0 - confidence) / 2.0;
    (quantile(&means, alpha), quantile(&means, 1.0 - alpha))
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn mean_finite(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.filter(|x| x.is_finite()).fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

fn pair_mean(v: &[(Snr, Snr)]) -> SnrPair {
    SnrPair { powerline_db: mean_finite(v.iter().map(|p| p.0.db)), alpha_db: mean_finite(v.iter().map(|p| p.1.db)) }
}

/// Compares two recordings of the same session over labeled segments.
pub fn state_report(
    a: &Recording,
    b: &Recording,
    names: [&str; 2],
    segments: &[StateSegment],
    cfg: &ReportConfig,
) -> Result<QualityReport> {
    if a.fs_hz() != b.fs_hz() {
        return Err(AnalysisError::Input(format!("sampling rates differ: {} vs {}", a.fs_hz(), b.fs_hz())));
    }
    let fs = a.fs_hz();
    let channels: Vec<String> = a.channels().iter().filter(|c| b.channel_index(c).is_some()).cloned().collect();
    if channels.is_empty() {
        return Err(AnalysisError::Input("recordings share no channel labels".into()));
    }
    let rows = |r: &Recording| -> Vec<usize> { channels.iter().map(|c| r.channel_index(c).unwrap()).collect() };
    let (ra, rb) = (rows(a), rows(b));
    let (fa, fb) = if cfg.prefilter {
        (bandpass_2_30(a.data(), fs)?, bandpass_2_30(b.data(), fs)?)
    } else {
        (a.data().to_owned(), b.data().to_owned())
    };
    let n_common = a.n_samples().min(b.n_samples());
    let min_len = (2.0 * fs).ceil() as usize;

    let mut notices = Vec::new();
    let mut order: Vec<State> = State::STANDARD.to_vec();
    for s in segments {
        if !order.contains(&s.state) {
            order.push(s.state.clone());
        }
    }

    let mut snr_samples: [Vec<(usize, usize, Snr, Snr)>; 2] = [vec![], vec![]];
    let mut states = Vec::new();
    for state in order {
        let mine: Vec<(usize, &StateSegment)> = segments.iter().enumerate().filter(|(_, s)| s.state == state).collect();
        if mine.is_empty() {
            notices.push(format!("no segments for state {state}; omitted"));
            continue;
        }
        let mut correlations = Vec::new();
        let mut spectra: [Vec<Spectrum>; 2] = [vec![], vec![]];
        let mut used = 0;
        for &(k, seg) in &mine {
            let i0 = ((seg.t_start_s * fs).round().max(0.0) as usize).min(n_common);
            let i1 = ((seg.t_end_s * fs).round().max(0.0) as usize).min(n_common);
            if i1 < i0 + min_len {
                notices.push(format!("segment {k} ({state}, {}-{} s) is shorter than 2 s; skipped", seg.t_start_s, seg.t_end_s));
                continue;
            }
            used += 1;
            for (c, label) in channels.iter().enumerate() {
                let xa = fa.slice(s![ra[c], i0..i1]).to_vec();
                let xb = fb.slice(s![rb[c], i0..i1]).to_vec();
                match aligned_correlation(&xa, &xb, fs, cfg.max_lag_s) {
                    Ok(al) => correlations.push(al.r),
                    Err(AnalysisError::ZeroVariance(_)) => {
                        notices.push(format!("segment {k} channel {label}: zero variance; skipped"));
                    }
                    Err(e) => return Err(e),
                }
                for (d, (rec, row)) in [(a, ra[c]), (b, rb[c])].into_iter().enumerate() {
                    let raw = rec.data().slice(s![row, i0..i1]).to_vec();
                    let psd = snr_spectrum(&raw, fs)?;
                    if fs >= 200.0 {
                        snr_samples[d].push((k, c, snr_powerline_from(&psd), snr_alpha_from(&psd)));
                    }
                    spectra[d].push(psd);
                }
            }
        }
        if correlations.is_empty() {
            notices.push(format!("no usable segments for state {state}; omitted"));
            continue;
        }
        let mean_r = correlations.iter().sum::<f64>() / correlations.len() as f64;
        let ci = bootstrap_mean_ci(&correlations, cfg.bootstrap_resamples, cfg.confidence, cfg.seed);
        notices.push(format!("state {state}: {used} segments, {} samples", correlations.len()));
        let [sa, sb] = spectra;
        states.push(StateSummary {
            state,
            n_segments: used,
            correlations,
            mean_r,
            ci,
            spectra: [Spectrum::average(&sa)?, Spectrum::average(&sb)?],
        });
    }
    if fs < 200.0 {
        notices.push(format!("sampling rate {fs} Hz is below 200 Hz; SNR not computed"));
    }

    let snr = [0, 1].map(|d| {
        let v = &snr_samples[d];
        let pairs = |f: &dyn Fn(&(usize, usize, Snr, Snr)) -> bool| -> Vec<(Snr, Snr)> {
            v.iter().filter(|x| f(x)).map(|x| (x.2, x.3)).collect()
        };
        let mut seg_ids: Vec<usize> = v.iter().map(|x| x.0).collect();
        seg_ids.dedup();
        DeviceSnr {
            device: names[d].to_string(),
            overall: pair_mean(&pairs(&|_| true)),
            by_channel: channels.iter().enumerate().map(|(c, l)| (l.clone(), pair_mean(&pairs(&|x| x.1 == c)))).collect(),
            by_segment: seg_ids.iter().map(|&k| (k, pair_mean(&pairs(&|x| x.0 == k)))).collect(),
            saturated: v.iter().filter(|x| x.2.saturated || x.3.saturated).count(),
        }
    });
    for d in &snr {
        if d.saturated > 0 {
            notices.push(format!("device {}: {} SNR samples saturated", d.device, d.saturated));
        }
    }
    Ok(QualityReport { devices: names.map(String::from), channels, states, snr, notices })
}
