//! Synthetic 8-channel EEG and IMU source that behaves like the headset.

use std::f64::consts::PI;

use neoscan_core::montage::{ELECTRODES, RECORDED, REFERENCE};
use neoscan_core::units::AdcScale;
use neoscan_core::SampleFrame;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, StreamError};
use crate::packet::FRAME_PERIOD_US;

pub const FS_HZ: f64 = 250.0;
/// MPU-6050 scale at the +-2 g range.
pub const ACCEL_LSB_PER_G: f64 = 16384.0;
/// MPU-6050 scale at the +-250 deg/s range.
pub const GYRO_LSB_PER_DPS: f64 = 131.0;

/// Kellet pink filter output RMS for unit-variance white input.
const PINK_RMS: f64 = 3.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub start_s: f64,
    pub end_s: f64,
}

impl Segment {
    pub fn new(start_s: f64, end_s: f64) -> Self {
        Self { start_s, end_s }
    }

    fn contains(&self, t: f64) -> bool {
        t >= self.start_s && t < self.end_s
    }

    /// Smooth 0..1 envelope with raised-cosine ramps of `ramp_s`.
    fn envelope(&self, t: f64, ramp_s: f64) -> f64 {
        if !self.contains(t) {
            return 0.0;
        }
        let edge = (t - self.start_s).min(self.end_s - t);
        if edge >= ramp_s {
            1.0
        } else {
            0.5 - 0.5 * (PI * edge / ramp_s).cos()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub seed: u64,
    /// Seed for sensor noise only; two devices sharing `seed` but not
    /// `noise_seed` see the same brain signal.
    pub noise_seed: Option<u64>,
    pub duration_s: f64,
    pub start_us: u64,
    /// RMS of the 1/f background at each electrode.
    pub background_uv: f64,
    pub white_noise_uv: f64,
    /// 50 Hz amplitude on the referential leads.
    pub line_uv: f64,
    pub line_harmonic_uv: f64,
    pub alpha_uv: f64,
    pub alpha_hz: f64,
    pub eyes_closed: Vec<Segment>,
    pub seizure_uv: f64,
    pub seizure_hz: f64,
    pub seizures: Vec<Segment>,
    pub blink_uv: f64,
    pub blinks_per_min: f64,
    pub motion_g: f64,
    pub movements: Vec<Segment>,
    pub adc: AdcScale,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            noise_seed: None,
            duration_s: 60.0,
            start_us: 0,
            background_uv: 10.0,
            white_noise_uv: 1.0,
            line_uv: 5.0,
            line_harmonic_uv: 1.0,
            alpha_uv: 30.0,
            alpha_hz: 10.0,
            eyes_closed: Vec::new(),
            seizure_uv: 150.0,
            seizure_hz: 3.0,
            seizures: Vec::new(),
            blink_uv: 100.0,
            blinks_per_min: 0.0,
            motion_g: 0.6,
            movements: Vec::new(),
            adc: AdcScale::default(),
        }
    }
}

impl SynthConfig {
    /// Only a 50 Hz tone of `amp_uv` on every lead: no background, noise or events.
    pub fn line_only(amp_uv: f64, duration_s: f64) -> Self {
        Self {
            duration_s,
            background_uv: 0.0,
            white_noise_uv: 0.0,
            line_uv: amp_uv,
            line_harmonic_uv: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(StreamError::Config(m.to_string()));
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return bad("duration_s must be positive");
        }
        let amps = [
            self.background_uv,
            self.white_noise_uv,
            self.line_uv,
            self.line_harmonic_uv,
            self.alpha_uv,
            self.seizure_uv,
            self.blink_uv,
            self.blinks_per_min,
            self.motion_g,
        ];
        if amps.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return bad("amplitudes and rates must be finite and non-negative");
        }
        if !(self.alpha_hz > 0.0 && self.alpha_hz < 125.0 && self.seizure_hz > 0.0 && self.seizure_hz < 125.0) {
            return bad("rhythm frequencies must lie below Nyquist");
        }
        for s in self.eyes_closed.iter().chain(&self.seizures).chain(&self.movements) {
            if !(s.start_s >= 0.0 && s.end_s > s.start_s) {
                return bad("segments need 0 <= start_s < end_s");
            }
        }
        if !(self.adc.vref_v > 0.0 && self.adc.gain > 0.0) {
            return bad("ADC vref and gain must be positive");
        }
        Ok(())
    }

    pub fn n_frames(&self) -> u64 {
        (self.duration_s * FS_HZ).round() as u64
    }
}

/// Ground-truth record on the annotation side channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub t_start_s: f64,
    pub t_end_s: f64,
    pub label: String,
}

impl Annotation {
    pub fn to_line(&self) -> String {
        format!("{} {} {}", self.t_start_s, self.t_end_s, self.label)
    }

    pub fn parse_line(line: &str) -> Result<Self> {
        let mut it = line.split_whitespace();
        let num = |v: Option<&str>| -> Result<f64> {
            v.and_then(|s| s.parse().ok())
                .ok_or_else(|| StreamError::Format(format!("bad annotation line {line:?}")))
        };
        let t_start_s = num(it.next())?;
        let t_end_s = num(it.next())?;
        let label: Vec<&str> = it.collect();
        if label.is_empty() || t_end_s < t_start_s {
            return Err(StreamError::Format(format!("bad annotation line {line:?}")));
        }
        Ok(Self { t_start_s, t_end_s, label: label.join(" ") })
    }
}

pub fn parse_annotations(text: &str) -> Result<Vec<Annotation>> {
    text.lines().filter(|l| !l.trim().is_empty()).map(Annotation::parse_line).collect()
}

/// One instant in physical units, before quantization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSample {
    /// Potentials referenced to Cz, in [`RECORDED`] order.
    pub uv: [f64; 8],
    pub accel_g: [f64; 3],
    pub gyro_dps: [f64; 3],
}

struct Gains {
    alpha: [f64; 9],
    seizure: [f64; 9],
    blink: [f64; 9],
}

/// Spatial weights in [`ELECTRODES`] order (Fp1, Fp2, C3, C4, Cz, T3, T4, O1, O2).
const GAINS: Gains = Gains {
    alpha: [0.05, 0.05, 0.3, 0.3, 0.25, 0.35, 0.35, 1.0, 1.0],
    // left temporal focus
    seizure: [0.6, 0.2, 0.8, 0.3, 0.4, 1.0, 0.2, 0.6, 0.2],
    blink: [1.0, 1.0, 0.05, 0.05, 0.05, 0.1, 0.1, 0.0, 0.0],
};
/// Line pickup per referential lead, [`RECORDED`] order.
const LINE_GAIN: [f64; 8] = [1.0, 0.9, 0.8, 0.85, 1.1, 1.05, 0.95, 1.0];

#[derive(Clone, Default)]
struct Pink([f64; 7]);

impl Pink {
    fn next(&mut self, w: f64) -> f64 {
        let b = &mut self.0;
        b[0] = 0.99886 * b[0] + w * 0.0555179;
        b[1] = 0.99332 * b[1] + w * 0.0750759;
        b[2] = 0.96900 * b[2] + w * 0.1538520;
        b[3] = 0.86650 * b[3] + w * 0.3104856;
        b[4] = 0.55000 * b[4] + w * 0.5329522;
        b[5] = -0.7616 * b[5] - w * 0.0168980;
        let out = b[0] + b[1] + b[2] + b[3] + b[4] + b[5] + b[6] + w * 0.5362;
        b[6] = w * 0.115926;
        out / PINK_RMS
    }
}

/// 3 Hz spike-and-wave cycle: a sharp negative spike followed by a broad
/// positive wave, roughly zero mean over the cycle.
fn spike_wave(phase: f64) -> f64 {
    let g = |c: f64, w: f64| (-((phase - c) / w).powi(2)).exp();
    -1.0 * g(0.12, 0.03) + 0.55 * g(0.55, 0.14) - 0.08
}

pub struct Simulator {
    cfg: SynthConfig,
    n: u64,
    total: u64,
    rng_signal: ChaCha8Rng,
    rng_noise: ChaCha8Rng,
    pink: Vec<Pink>,
    line_phase: f64,
    blinks: Vec<f64>,
}

impl Simulator {
    pub fn new(cfg: SynthConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng_blink = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xB11E);
        let mut blinks = Vec::new();
        if cfg.blinks_per_min > 0.0 && cfg.blink_uv > 0.0 {
            let mean = 60.0 / cfg.blinks_per_min;
            let mut t = rng_blink.random::<f64>() * mean;
            while t < cfg.duration_s {
                if !cfg.eyes_closed.iter().any(|s| s.contains(t)) && t > 0.3 && t < cfg.duration_s - 0.3 {
                    blinks.push(t);
                }
                let u: f64 = rng_blink.random();
                t += (-(1.0 - u).ln() * mean).max(1.0);
            }
        }
        let noise_seed = cfg.noise_seed.unwrap_or(cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0x5EED);
        let line_phase = ChaCha8Rng::seed_from_u64(noise_seed).random::<f64>() * 2.0 * PI;
        Ok(Self {
            total: cfg.n_frames(),
            rng_signal: ChaCha8Rng::seed_from_u64(cfg.seed),
            rng_noise: ChaCha8Rng::seed_from_u64(noise_seed.wrapping_add(1)),
            pink: vec![Pink::default(); ELECTRODES.len()],
            line_phase,
            blinks,
            cfg,
            n: 0,
        })
    }

    pub fn config(&self) -> &SynthConfig {
        &self.cfg
    }

    pub fn total_frames(&self) -> u64 {
        self.total
    }

    pub fn remaining(&self) -> u64 {
        self.total - self.n
    }

    /// Ground truth for the whole run, sorted by start time.
    pub fn annotations(&self) -> Vec<Annotation> {
        let mut out = Vec::new();
        let mut push = |segs: &[Segment], label: &str| {
            for s in segs {
                out.push(Annotation {
                    t_start_s: s.start_s,
                    t_end_s: s.end_s.min(self.cfg.duration_s),
                    label: label.to_string(),
                });
            }
        };
        push(&self.cfg.seizures, "seizure");
        push(&self.cfg.eyes_closed, "eyes-closed");
        push(&self.cfg.movements, "motion");
        for &t in &self.blinks {
            out.push(Annotation { t_start_s: t - 0.25, t_end_s: t + 0.25, label: "blink".into() });
        }
        out.sort_by(|a, b| a.t_start_s.total_cmp(&b.t_start_s));
        out
    }

    pub fn next_sample(&mut self) -> Option<SynthSample> {
        if self.n >= self.total {
            return None;
        }
        let t = self.n as f64 / FS_HZ;
        let c = &self.cfg;
        let alpha_env: f64 = c.eyes_closed.iter().map(|s| s.envelope(t, 0.5)).fold(0.0, f64::max);
        let alpha = if alpha_env > 0.0 {
            alpha_env * c.alpha_uv * (0.75 + 0.25 * (2.0 * PI * 0.3 * t).sin()) * (2.0 * PI * c.alpha_hz * t).sin()
        } else {
            0.0
        };
        let sz_env: f64 = c.seizures.iter().map(|s| s.envelope(t, 1.0)).fold(0.0, f64::max);
        let seizure = if sz_env > 0.0 { sz_env * c.seizure_uv * spike_wave((t * c.seizure_hz).fract()) } else { 0.0 };
        let blink: f64 = self
            .blinks
            .iter()
            .filter(|&&b| (t - b).abs() < 0.5)
            .map(|&b| c.blink_uv * (-0.5 * ((t - b) / 0.08).powi(2)).exp())
            .sum();
        let mut v = [0.0; 9];
        for (e, ve) in v.iter_mut().enumerate() {
            let w: f64 = StandardNormal.sample(&mut self.rng_signal);
            *ve = c.background_uv * self.pink[e].next(w)
                + GAINS.alpha[e] * alpha
                + GAINS.seizure[e] * seizure
                + GAINS.blink[e] * blink;
        }
        let cz = ELECTRODES.iter().position(|&l| l == REFERENCE).unwrap();
        let line = c.line_uv * (2.0 * PI * 50.0 * t + self.line_phase).sin()
            + c.line_harmonic_uv * (2.0 * PI * 100.0 * t + 2.0 * self.line_phase).sin();
        let mut uv = [0.0; 8];
        for (k, label) in RECORDED.iter().enumerate() {
            let e = ELECTRODES.iter().position(|l| l == label).unwrap();
            let noise: f64 = StandardNormal.sample(&mut self.rng_noise);
            uv[k] = v[e] - v[cz] + LINE_GAIN[k] * line + c.white_noise_uv * noise;
        }
        let moving = c.movements.iter().map(|s| s.envelope(t, 0.05)).fold(0.0, f64::max);
        let mut accel_g = [0.0, 0.0, 1.0];
        let mut gyro_dps = [0.0; 3];
        for k in 0..3 {
            let na: f64 = StandardNormal.sample(&mut self.rng_noise);
            let ng: f64 = StandardNormal.sample(&mut self.rng_noise);
            accel_g[k] += 0.005 * na;
            gyro_dps[k] += 0.5 * ng;
        }
        if moving > 0.0 {
            accel_g[0] += moving * c.motion_g * (2.0 * PI * 2.0 * t).sin().signum();
            gyro_dps[2] += moving * 200.0 * c.motion_g * (2.0 * PI * 2.0 * t).cos();
        }
        self.n += 1;
        Some(SynthSample { uv, accel_g, gyro_dps })
    }

    pub fn quantize(&self, seq: u64, s: &SynthSample) -> SampleFrame {
        let q = |v: f64, scale: f64| (v * scale).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
        let mut f = SampleFrame {
            seq: seq as u32,
            t_us: self.cfg.start_us + seq * FRAME_PERIOD_US,
            ..SampleFrame::default()
        };
        for (a, &v) in f.adc.iter_mut().zip(&s.uv) {
            *a = self.cfg.adc.to_counts(v);
        }
        for k in 0..3 {
            f.accel[k] = q(s.accel_g[k], ACCEL_LSB_PER_G);
            f.gyro[k] = q(s.gyro_dps[k], GYRO_LSB_PER_DPS);
        }
        f
    }

    pub fn next_frame(&mut self) -> Option<SampleFrame> {
        let seq = self.n;
        let s = self.next_sample()?;
        Some(self.quantize(seq, &s))
    }

    pub fn next_frames(&mut self, n: usize) -> Vec<SampleFrame> {
        std::iter::from_fn(|| self.next_frame()).take(n).collect()
    }
}

impl Iterator for Simulator {
    type Item = SampleFrame;

    fn next(&mut self) -> Option<SampleFrame> {
        self.next_frame()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_count_and_timestamps() {
        let cfg = SynthConfig { duration_s: 2.0, start_us: 10, ..Default::default() };
        let frames: Vec<_> = Simulator::new(cfg).unwrap().collect();
        assert_eq!(frames.len(), 500);
        assert_eq!(frames[3].seq, 3);
        assert_eq!(frames[3].t_us, 10 + 3 * 4000);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let cfg = SynthConfig {
            duration_s: 3.0,
            blinks_per_min: 30.0,
            seizures: vec![Segment::new(1.0, 2.0)],
            ..Default::default()
        };
        let a: Vec<_> = std::iter::from_fn({
            let mut s = Simulator::new(cfg.clone()).unwrap();
            move || s.next_sample()
        })
        .collect();
        let b: Vec<_> = std::iter::from_fn({
            let mut s = Simulator::new(cfg.clone()).unwrap();
            move || s.next_sample()
        })
        .collect();
        assert_eq!(a.len(), 750);
        assert!(a.iter().zip(&b).all(|(x, y)| x.uv.iter().zip(&y.uv).all(|(p, q)| p.to_bits() == q.to_bits())));
    }

    #[test]
    fn stationary_imu_reads_one_g() {
        let cfg = SynthConfig { duration_s: 1.0, ..Default::default() };
        for f in Simulator::new(cfg).unwrap() {
            assert!((f.accel[2] as f64 / ACCEL_LSB_PER_G - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn annotations_mark_scheduled_segments() {
        let cfg = SynthConfig {
            duration_s: 120.0,
            seizures: vec![Segment::new(60.0, 90.0)],
            ..Default::default()
        };
        let a = Simulator::new(cfg).unwrap().annotations();
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].to_line(), "60 90 seizure");
        assert_eq!(Annotation::parse_line("60 90 seizure").unwrap(), a[0]);
    }

    #[test]
    fn blinks_avoid_closed_eyes() {
        let cfg = SynthConfig {
            duration_s: 120.0,
            blinks_per_min: 20.0,
            eyes_closed: vec![Segment::new(30.0, 90.0)],
            ..Default::default()
        };
        let a = Simulator::new(cfg).unwrap().annotations();
        let blinks: Vec<_> = a.iter().filter(|a| a.label == "blink").collect();
        assert!(blinks.len() > 5);
        assert!(blinks.iter().all(|b| b.t_end_s < 30.0 || b.t_start_s > 89.0));
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(Simulator::new(SynthConfig { duration_s: 0.0, ..Default::default() }).is_err());
        let cfg = SynthConfig { seizures: vec![Segment::new(5.0, 4.0)], ..Default::default() };
        assert!(Simulator::new(cfg).is_err());
    }

    #[test]
    fn spike_wave_is_near_zero_mean() {
        let m: f64 = (0..1000).map(|i| spike_wave(i as f64 / 1000.0)).sum::<f64>() / 1000.0;
        assert!(m.abs() < 0.05, "{m}");
    }
}
