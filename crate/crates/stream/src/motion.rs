//! Threshold detector for head movements from the IMU.

use serde::{Deserialize, Serialize};

use crate::convert::ImuSample;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotionConfig {
    /// Limit on `| |a| - 1 g |`.
    pub accel_thresh_g: f64,
    pub gyro_thresh_dps: f64,
    pub min_duration_ms: f64,
    pub quiet_time_ms: f64,
    /// Peaks above `major_factor` times a threshold are major.
    pub major_factor: f64,
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self {
            accel_thresh_g: 0.2,
            gyro_thresh_dps: 50.0,
            min_duration_ms: 100.0,
            quiet_time_ms: 500.0,
            major_factor: 2.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Minor,
    Major,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionEvent {
    pub t_start_us: u64,
    pub t_end_us: u64,
    /// Largest deviation of the acceleration magnitude from 1 g.
    pub peak_accel_g: f64,
    pub peak_gyro_dps: f64,
    pub severity: Severity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MotionAlert {
    /// Raised as soon as a movement has lasted `min_duration_ms`.
    Started { t_start_us: u64, t_detect_us: u64 },
    Ended(MotionEvent),
}

#[derive(Debug, Clone, Copy)]
enum State {
    Idle,
    Candidate { start: u64, peak_a: f64, peak_g: f64 },
    Active { start: u64, last_above: u64, peak_a: f64, peak_g: f64 },
}

#[derive(Debug, Clone)]
pub struct MotionDetector {
    cfg: MotionConfig,
    state: State,
}

impl MotionDetector {
    pub fn new(cfg: MotionConfig) -> Self {
        Self { cfg, state: State::Idle }
    }

    fn event(&self, start: u64, end: u64, peak_a: f64, peak_g: f64) -> MotionEvent {
        let major = peak_a > self.cfg.major_factor * self.cfg.accel_thresh_g
            || peak_g > self.cfg.major_factor * self.cfg.gyro_thresh_dps;
        MotionEvent {
            t_start_us: start,
            t_end_us: end,
            peak_accel_g: peak_a,
            peak_gyro_dps: peak_g,
            severity: if major { Severity::Major } else { Severity::Minor },
        }
    }

    pub fn push(&mut self, s: &ImuSample) -> Option<MotionAlert> {
        let a = (s.accel_g.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs();
        let g = s.gyro_dps.iter().map(|v| v * v).sum::<f64>().sqrt();
        let above = a > self.cfg.accel_thresh_g || g > self.cfg.gyro_thresh_dps;
        let min_us = (self.cfg.min_duration_ms * 1000.0) as u64;
        let quiet_us = (self.cfg.quiet_time_ms * 1000.0) as u64;
        let t = s.t_us;
        match self.state {
            State::Idle => {
                if above {
                    self.state = State::Candidate { start: t, peak_a: a, peak_g: g };
                }
                None
            }
            State::Candidate { start, peak_a, peak_g } => {
                if !above {
                    self.state = State::Idle;
                    return None;
                }
                let (peak_a, peak_g) = (peak_a.max(a), peak_g.max(g));
                if t.saturating_sub(start) >= min_us {
                    self.state = State::Active { start, last_above: t, peak_a, peak_g };
                    Some(MotionAlert::Started { t_start_us: start, t_detect_us: t })
                } else {
                    self.state = State::Candidate { start, peak_a, peak_g };
                    None
                }
            }
            State::Active { start, last_above, peak_a, peak_g } => {
                if above {
                    self.state = State::Active { start, last_above: t, peak_a: peak_a.max(a), peak_g: peak_g.max(g) };
                    None
                } else if t.saturating_sub(last_above) >= quiet_us {
                    self.state = State::Idle;
                    Some(MotionAlert::Ended(self.event(start, last_above, peak_a, peak_g)))
                } else {
                    None
                }
            }
        }
    }

    /// Closes an event still open at the end of the trace.
    pub fn finish(&mut self) -> Option<MotionEvent> {
        let out = match self.state {
            State::Active { start, last_above, peak_a, peak_g } => Some(self.event(start, last_above, peak_a, peak_g)),
            _ => None,
        };
        self.state = State::Idle;
        out
    }
}

pub fn detect_motion(imu: &[ImuSample], cfg: MotionConfig) -> Vec<MotionEvent> {
    let mut d = MotionDetector::new(cfg);
    let mut out: Vec<MotionEvent> = imu
        .iter()
        .filter_map(|s| match d.push(s) {
            Some(MotionAlert::Ended(e)) => Some(e),
            _ => None,
        })
        .collect();
    out.extend(d.finish());
    out
}
