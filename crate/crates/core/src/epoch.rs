//! Epoch segmentation, window labeling and the seizure persistence rule.
//!
//! Training windows are 12 s long and advance by 1 s after a seizure-labeled
//! window and by 2 s otherwise (11 s and 10 s overlap). Streaming windows
//! advance by a fixed hop. A window is labeled seizure when it holds at least
//! one second of annotated seizure, counted cumulatively.

use ndarray::s;

use crate::error::{Error, Result};
use crate::types::{Epoch, EpochLabel, Recording};
use crate::{EPOCH_SAMPLES, EPOCH_SECONDS, MODEL_FS_HZ, N_BIPOLAR};

/// Per-second binary seizure annotation.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SeizureMask(Vec<bool>);

impl SeizureMask {
    pub fn new(seconds: Vec<bool>) -> Self {
        Self(seconds)
    }

    pub fn all(value: bool, n_seconds: usize) -> Self {
        Self(vec![value; n_seconds])
    }

    /// Builds a mask from `[start, end)` intervals in seconds. Interval bounds
    /// are floored to the one-second grid.
    pub fn from_intervals(intervals: &[(f64, f64)], n_seconds: usize) -> Self {
        let mut m = vec![false; n_seconds];
        for &(a, b) in intervals {
            let lo = a.max(0.0).floor() as usize;
            let hi = (b.max(0.0).floor() as usize).min(n_seconds);
            for v in m.iter_mut().take(hi).skip(lo) {
                *v = true;
            }
        }
        Self(m)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    /// Seconds of annotated seizure inside `[t0, t0 + len)`.
    pub fn seizure_seconds(&self, t0: f64, len: f64) -> f64 {
        let t1 = t0 + len;
        let first = t0.max(0.0).floor() as usize;
        let last = (t1.ceil() as usize).min(self.0.len());
        (first..last)
            .filter(|&k| self.0[k])
            .map(|k| {
                let a = (k as f64).max(t0);
                let b = ((k + 1) as f64).min(t1);
                (b - a).max(0.0)
            })
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SegmentMode {
    /// 1 s hop after seizure windows, 2 s after non-seizure windows.
    Train,
    /// Fixed hop in seconds.
    Stream { hop_s: f64 },
}

impl SegmentMode {
    pub const TRAIN_SEIZURE_HOP_S: usize = 1;
    pub const TRAIN_BACKGROUND_HOP_S: usize = 2;

    pub fn stream_default() -> Self {
        SegmentMode::Stream { hop_s: 1.0 }
    }
}

/// Cuts a 12-channel, 32 Hz recording into labeled 12 s epochs.
///
/// Recordings shorter than one window produce an empty sequence.
pub fn segment_epochs(
    rec: &Recording,
    mask: &SeizureMask,
    mode: SegmentMode,
) -> Result<Vec<(Epoch, EpochLabel)>> {
    if rec.n_channels() != N_BIPOLAR {
        return Err(Error::Shape(format!(
            "segmentation expects {N_BIPOLAR} channels, got {}",
            rec.n_channels()
        )));
    }
    if (rec.fs_hz() - MODEL_FS_HZ).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "segmentation expects {MODEL_FS_HZ} Hz input, got {} Hz",
            rec.fs_hz()
        )));
    }
    let data = rec.data();
    plan_windows(rec.n_samples(), MODEL_FS_HZ, mask, mode)?
        .into_iter()
        .map(|(start, label)| {
            let window = data.slice(s![.., start..start + EPOCH_SAMPLES]).to_owned();
            let t0 = start as f64 / MODEL_FS_HZ;
            Ok((Epoch::new(window, (t0 * 1e6).round() as u64)?, label))
        })
        .collect()
}

/// Window start samples and labels for `n` samples at `fs_hz`, following the
/// same hop rules as [`segment_epochs`]. Windows span [`EPOCH_SECONDS`].
pub fn plan_windows(n: usize, fs_hz: f64, mask: &SeizureMask, mode: SegmentMode) -> Result<Vec<(usize, EpochLabel)>> {
    if !(fs_hz > 0.0 && fs_hz.fract() == 0.0) {
        return Err(Error::InvalidArgument(format!("window planning needs an integer rate, got {fs_hz} Hz")));
    }
    let fs = fs_hz as usize;
    let needed_seconds = n.div_ceil(fs);
    if mask.len() < needed_seconds {
        return Err(Error::InvalidArgument(format!(
            "annotation mask covers {} s of a {needed_seconds} s recording",
            mask.len()
        )));
    }
    let hop_samples = |label: &EpochLabel| -> Result<usize> {
        match mode {
            SegmentMode::Train => {
                let s = if label.is_seizure() {
                    SegmentMode::TRAIN_SEIZURE_HOP_S
                } else {
                    SegmentMode::TRAIN_BACKGROUND_HOP_S
                };
                Ok(s * fs)
            }
            SegmentMode::Stream { hop_s } => {
                let h = (hop_s * fs_hz).round();
                if !(h >= 1.0) {
                    return Err(Error::InvalidArgument(format!("stream hop {hop_s} s too small")));
                }
                Ok(h as usize)
            }
        }
    };
    let window = EPOCH_SECONDS * fs;
    let mut out = Vec::new();
    let mut start = 0usize;
    while start + window <= n {
        let t0 = start as f64 / fs_hz;
        let label = EpochLabel::from_seizure_seconds(mask.seizure_seconds(t0, EPOCH_SECONDS as f64));
        let hop = hop_samples(&label)?;
        out.push((start, label));
        start += hop;
    }
    Ok(out)
}

/// One scored window. `t_start_s` is the window start on the stream clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochScore {
    pub t_start_s: f64,
    pub prob: f64,
}

/// Persistence rule: a seizure is declared once consecutive above-threshold
/// windows cover at least `min_persistence_s` of stream time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionRule {
    pub threshold: f64,
    pub min_persistence_s: f64,
    pub hop_s: f64,
}

impl Default for DetectionRule {
    fn default() -> Self {
        Self { threshold: 0.5, min_persistence_s: 5.0, hop_s: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeizureEvent {
    /// End time of the first above-threshold window of the run (the window's
    /// "current time point").
    pub onset_s: f64,
    /// End time of the window at which the rule was satisfied.
    pub declared_s: f64,
    pub peak_prob: f64,
}

/// Incremental form of [`detection_decision`]; fires once per positive run.
#[derive(Debug, Clone)]
pub struct PersistenceDetector {
    rule: DetectionRule,
    run_start: Option<f64>,
    last_t: Option<f64>,
    run_len: usize,
    peak: f64,
    fired: bool,
}

impl PersistenceDetector {
    pub fn new(rule: DetectionRule) -> Self {
        Self { rule, run_start: None, last_t: None, run_len: 0, peak: 0.0, fired: false }
    }

    pub fn rule(&self) -> &DetectionRule {
        &self.rule
    }

    pub fn push(&mut self, score: EpochScore) -> Result<Option<SeizureEvent>> {
        if !(0.0..=1.0).contains(&score.prob) {
            return Err(Error::InvalidArgument(format!("probability {} outside [0, 1]", score.prob)));
        }
        let contiguous = self
            .last_t
            .is_some_and(|t| score.t_start_s - t <= self.rule.hop_s * 1.5 + 1e-9);
        self.last_t = Some(score.t_start_s);

        if score.prob <= self.rule.threshold {
            self.reset_run();
            return Ok(None);
        }
        if self.run_start.is_none() || !contiguous {
            self.reset_run();
            self.run_start = Some(score.t_start_s);
        }
        self.run_len += 1;
        self.peak = self.peak.max(score.prob);
        let covered = self.run_len as f64 * self.rule.hop_s;
        if !self.fired && covered + 1e-9 >= self.rule.min_persistence_s {
            self.fired = true;
            let end = EPOCH_SECONDS as f64;
            return Ok(Some(SeizureEvent {
                onset_s: self.run_start.unwrap_or(score.t_start_s) + end,
                declared_s: score.t_start_s + end,
                peak_prob: self.peak,
            }));
        }
        Ok(None)
    }

    fn reset_run(&mut self) {
        self.run_start = None;
        self.run_len = 0;
        self.peak = 0.0;
        self.fired = false;
    }
}

/// All seizure events in a scored sequence.
pub fn detect_events(scores: &[EpochScore], rule: DetectionRule) -> Result<Vec<SeizureEvent>> {
    let mut det = PersistenceDetector::new(rule);
    let mut events = Vec::new();
    for &s in scores {
        if let Some(ev) = det.push(s)? {
            events.push(ev);
        }
    }
    Ok(events)
}

/// First seizure event in a scored sequence, if any.
pub fn detection_decision(scores: &[EpochScore], rule: DetectionRule) -> Result<Option<SeizureEvent>> {
    Ok(detect_events(scores, rule)?.into_iter().next())
}
