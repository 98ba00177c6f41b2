//! Streaming detection pipeline: µV conversion, causal filtering, bipolar
//! derivation, 12 s epochs on a 1 s hop, detection and the persistence rule,
//! with IMU movement alerts alongside.

use std::sync::Arc;
use std::time::{Duration, Instant};

use ndarray::{s, Array2, ArrayView2};

use neoscan_core::dsp::{filter_forward, BiquadCascade, EdgeNormalization, FilterState, PreprocessChain};
use neoscan_core::epoch::{DetectionRule, EpochScore, PersistenceDetector, SeizureEvent};
use neoscan_core::montage::MontageGraph;
use neoscan_core::units::AdcScale;
use neoscan_core::{SampleFrame, DEVICE_FS_HZ, N_REFERENTIAL};
use neoscan_detector::{preprocess_for_model, Detector, RAW_EPOCH_SAMPLES};
use neoscan_stream::packet::FRAME_PERIOD_US;
use neoscan_stream::{ImuSample, MotionAlert, MotionConfig, MotionDetector, MotionEvent, Severity};

use crate::error::{CliError, Result};

const HOP_SAMPLES: usize = DEVICE_FS_HZ as usize;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub edges: EdgeNormalization,
    pub rule: DetectionRule,
    pub motion: MotionConfig,
    pub scale: AdcScale,
    pub top_k: usize,
    /// Longest frame gap bridged by holding the last sample; longer gaps
    /// restart the filters and the epoch buffer.
    pub max_fill_frames: u32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            edges: EdgeNormalization::default(),
            rule: DetectionRule::default(),
            motion: MotionConfig::default(),
            scale: AdcScale::default(),
            top_k: 3,
            max_fill_frames: 2500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport {
    /// Window end on the stream clock.
    pub t_end_s: f64,
    pub probability: f64,
    pub top_channels: Vec<String>,
    pub motion: bool,
    /// Processing time spent on this hop.
    pub latency: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PipelineEvent {
    Epoch(EpochReport),
    Seizure(SeizureEvent),
    MotionStarted { t_start_s: f64, t_detect_s: f64 },
    MotionEnded(MotionEvent),
    Gap { first_missing_seq: u32, n_missing: u32, bridged: bool },
}

fn us_to_s(t: u64) -> f64 {
    t as f64 * 1e-6
}

impl PipelineEvent {
    /// Epoch lines are `t prob top-channels motion-flag`; everything else
    /// starts with an upper-case tag.
    pub fn to_line(&self) -> String {
        match self {
            PipelineEvent::Epoch(e) => {
                let top = if e.top_channels.is_empty() { "-".to_string() } else { e.top_channels.join(",") };
                format!("{:.3} {:.4} {top} {}", e.t_end_s, e.probability, u8::from(e.motion))
            }
            PipelineEvent::Seizure(ev) => format!(
                "EVENT seizure onset={:.3} declared={:.3} peak={:.4}",
                ev.onset_s, ev.declared_s, ev.peak_prob
            ),
            PipelineEvent::MotionStarted { t_start_s, t_detect_s } => {
                format!("ALERT motion start={t_start_s:.3} detected={t_detect_s:.3}")
            }
            PipelineEvent::MotionEnded(m) => format!(
                "ALERT motion-end start={:.3} end={:.3} severity={} peak_accel_g={:.3} peak_gyro_dps={:.1}",
                us_to_s(m.t_start_us),
                us_to_s(m.t_end_us),
                match m.severity {
                    Severity::Minor => "minor",
                    Severity::Major => "major",
                },
                m.peak_accel_g,
                m.peak_gyro_dps
            ),
            PipelineEvent::Gap { first_missing_seq, n_missing, bridged } => format!(
                "GAP seq={first_missing_seq} missing={n_missing} action={}",
                if *bridged { "hold" } else { "restart" }
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PipelineStats {
    pub samples: u64,
    pub epochs: u64,
    pub events: u64,
    pub motion_alerts: u64,
    pub gaps: u64,
    pub max_hop_latency: Duration,
    pub total_latency: Duration,
}

pub struct Pipeline {
    cfg: PipelineConfig,
    montage: MontageGraph,
    detector: Arc<dyn Detector>,
    zscore: bool,
    chain: BiquadCascade,
    state: FilterState,
    ring: Array2<f64>,
    ring_pos: usize,
    ring_filled: usize,
    since_epoch: usize,
    next_t_us: Option<u64>,
    last_seq: Option<u32>,
    last_uv: [f64; N_REFERENTIAL],
    last_imu: Option<ImuSample>,
    persistence: PersistenceDetector,
    motion: MotionDetector,
    motion_active: bool,
    last_motion_end_us: Option<u64>,
    work: Duration,
    stats: PipelineStats,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, montage: MontageGraph, detector: Arc<dyn Detector>) -> Result<Self> {
        if montage.electrodes().recorded().len() != N_REFERENTIAL {
            return Err(CliError::Usage(format!("montage must use {N_REFERENTIAL} recorded electrodes")));
        }
        let chain = PreprocessChain::new(DEVICE_FS_HZ, cfg.edges)?.cascade();
        let state = chain.state(N_REFERENTIAL);
        Ok(Self {
            zscore: detector.wants_zscore(),
            ring: Array2::zeros((montage.n_channels(), RAW_EPOCH_SAMPLES)),
            persistence: PersistenceDetector::new(cfg.rule),
            motion: MotionDetector::new(cfg.motion),
            chain,
            state,
            montage,
            detector,
            ring_pos: 0,
            ring_filled: 0,
            since_epoch: 0,
            next_t_us: None,
            last_seq: None,
            last_uv: [0.0; N_REFERENTIAL],
            last_imu: None,
            motion_active: false,
            last_motion_end_us: None,
            work: Duration::ZERO,
            stats: PipelineStats::default(),
            cfg,
        })
    }

    pub fn stats(&self) -> &PipelineStats {
        &self.stats
    }

    pub fn montage(&self) -> &MontageGraph {
        &self.montage
    }

    /// Decoded frames in sequence order. Missing sequence numbers are
    /// bridged or trigger a restart, see [`PipelineConfig::max_fill_frames`].
    pub fn push_frames(&mut self, frames: &[SampleFrame]) -> Result<Vec<PipelineEvent>> {
        let mut events = Vec::new();
        let mut run_start = 0;
        for i in 0..frames.len() {
            let f = &frames[i];
            let expected = if i == run_start { self.last_seq.map(|s| s.wrapping_add(1)) } else { Some(frames[i - 1].seq.wrapping_add(1)) };
            if let Some(exp) = expected.filter(|&e| e != f.seq) {
                self.push_run(&frames[run_start..i], &mut events)?;
                run_start = i;
                let missing = f.seq.wrapping_sub(exp);
                self.handle_gap(exp, missing, &mut events)?;
            }
        }
        self.push_run(&frames[run_start..], &mut events)?;
        Ok(events)
    }

    fn push_run(&mut self, frames: &[SampleFrame], events: &mut Vec<PipelineEvent>) -> Result<()> {
        let Some(first) = frames.first() else { return Ok(()) };
        let t = Instant::now();
        let mut uv = Array2::zeros((N_REFERENTIAL, frames.len()));
        for (i, f) in frames.iter().enumerate() {
            for (c, &count) in f.adc.iter().enumerate() {
                uv[[c, i]] = self.cfg.scale.to_microvolts(count);
            }
        }
        let imu: Vec<ImuSample> = frames.iter().map(ImuSample::from_frame).collect();
        self.last_seq = Some(frames[frames.len() - 1].seq);
        self.work += t.elapsed();
        self.push_block_at(uv.view(), Some(&imu), first.t_us, events)
    }

    fn handle_gap(&mut self, first_missing_seq: u32, n_missing: u32, events: &mut Vec<PipelineEvent>) -> Result<()> {
        self.stats.gaps += 1;
        let bridged = n_missing <= self.cfg.max_fill_frames && self.next_t_us.is_some();
        events.push(PipelineEvent::Gap { first_missing_seq, n_missing, bridged });
        if bridged {
            let n = n_missing as usize;
            let t0 = self.next_t_us.unwrap_or(0);
            let uv = Array2::from_shape_fn((N_REFERENTIAL, n), |(c, _)| self.last_uv[c]);
            let imu: Option<Vec<ImuSample>> = self.last_imu.map(|s| {
                (0..n).map(|i| ImuSample { t_us: t0 + i as u64 * FRAME_PERIOD_US, ..s }).collect()
            });
            self.push_block_at(uv.view(), imu.as_deref(), t0, events)?;
        } else {
            self.restart();
        }
        self.last_seq = Some(first_missing_seq.wrapping_add(n_missing).wrapping_sub(1));
        Ok(())
    }

    fn restart(&mut self) {
        self.state = self.chain.state(N_REFERENTIAL);
        self.ring_filled = 0;
        self.since_epoch = 0;
        self.next_t_us = None;
        self.persistence = PersistenceDetector::new(self.cfg.rule);
    }

    /// Referential µV samples (rows in recorded-electrode order) starting at
    /// the stream time following the previous block.
    pub fn push_block(&mut self, uv: ArrayView2<f64>, imu: Option<&[ImuSample]>) -> Result<Vec<PipelineEvent>> {
        let t0 = self.next_t_us.unwrap_or(0);
        let mut events = Vec::new();
        self.push_block_at(uv, imu, t0, &mut events)?;
        Ok(events)
    }

    fn push_block_at(
        &mut self,
        uv: ArrayView2<f64>,
        imu: Option<&[ImuSample]>,
        t0_us: u64,
        events: &mut Vec<PipelineEvent>,
    ) -> Result<()> {
        if uv.nrows() != N_REFERENTIAL {
            return Err(CliError::Usage(format!("expected {N_REFERENTIAL} referential rows, got {}", uv.nrows())));
        }
        if imu.is_some_and(|m| m.len() != uv.ncols()) {
            return Err(CliError::Usage("IMU samples must match EEG samples".into()));
        }
        let n = uv.ncols();
        if n == 0 {
            return Ok(());
        }
        let mut done = 0;
        while done < n {
            let k = (HOP_SAMPLES - self.since_epoch).min(n - done);
            let t = Instant::now();
            let block = uv.slice(s![.., done..done + k]);
            let filtered = filter_forward(&self.chain, &mut self.state, block)?;
            let bipolar = self.montage.derive_matrix(filtered.view())?;
            for i in 0..k {
                self.ring.column_mut(self.ring_pos).assign(&bipolar.column(i));
                self.ring_pos = (self.ring_pos + 1) % RAW_EPOCH_SAMPLES;
            }
            self.ring_filled = (self.ring_filled + k).min(RAW_EPOCH_SAMPLES);
            self.since_epoch += k;
            if let Some(m) = imu {
                for s in &m[done..done + k] {
                    match self.motion.push(s) {
                        Some(MotionAlert::Started { t_start_us, t_detect_us }) => {
                            self.motion_active = true;
                            self.stats.motion_alerts += 1;
                            events.push(PipelineEvent::MotionStarted {
                                t_start_s: us_to_s(t_start_us),
                                t_detect_s: us_to_s(t_detect_us),
                            });
                        }
                        Some(MotionAlert::Ended(ev)) => {
                            self.motion_active = false;
                            self.last_motion_end_us = Some(ev.t_end_us);
                            events.push(PipelineEvent::MotionEnded(ev));
                        }
                        None => {}
                    }
                }
                self.last_imu = m.get(done + k - 1).copied();
            }
            done += k;
            self.next_t_us = Some(t0_us + done as u64 * FRAME_PERIOD_US);
            self.work += t.elapsed();
            if self.since_epoch == HOP_SAMPLES {
                self.since_epoch = 0;
                if self.ring_filled == RAW_EPOCH_SAMPLES {
                    self.run_epoch(events)?;
                }
            }
        }
        for c in 0..N_REFERENTIAL {
            self.last_uv[c] = uv[[c, n - 1]];
        }
        self.stats.samples += n as u64;
        Ok(())
    }

    fn run_epoch(&mut self, events: &mut Vec<PipelineEvent>) -> Result<()> {
        let t = Instant::now();
        let t_end_us = self.next_t_us.unwrap_or(0);
        let t_start_us = t_end_us.saturating_sub(RAW_EPOCH_SAMPLES as u64 * FRAME_PERIOD_US);
        let mut window = Array2::zeros(self.ring.raw_dim());
        let tail = RAW_EPOCH_SAMPLES - self.ring_pos;
        window.slice_mut(s![.., ..tail]).assign(&self.ring.slice(s![.., self.ring_pos..]));
        window.slice_mut(s![.., tail..]).assign(&self.ring.slice(s![.., ..self.ring_pos]));
        let epoch = preprocess_for_model(window.view(), t_start_us, self.zscore)?;
        let pred = self.detector.predict(&epoch)?;
        if !pred.probability.is_finite() {
            return Err(CliError::Numeric(format!("detector returned {} at t={}", pred.probability, us_to_s(t_end_us))));
        }
        let names = self.montage.channel_names();
        let top_channels = pred
            .relevance
            .as_ref()
            .map(|r| r.top_channels(self.cfg.top_k).into_iter().map(|i| names[i].clone()).collect())
            .unwrap_or_default();
        let motion = self.motion_active || self.last_motion_end_us.is_some_and(|e| e >= t_start_us);
        let score = EpochScore { t_start_s: us_to_s(t_start_us), prob: pred.probability.clamp(0.0, 1.0) };
        let fired = self.persistence.push(score)?;
        let latency = self.work + t.elapsed();
        self.work = Duration::ZERO;
        self.stats.epochs += 1;
        self.stats.total_latency += latency;
        self.stats.max_hop_latency = self.stats.max_hop_latency.max(latency);
        events.push(PipelineEvent::Epoch(EpochReport {
            t_end_s: us_to_s(t_end_us),
            probability: pred.probability,
            top_channels,
            motion,
            latency,
        }));
        if let Some(ev) = fired {
            self.stats.events += 1;
            events.push(PipelineEvent::Seizure(ev));
        }
        Ok(())
    }

    /// Closes a movement still open at the end of the stream.
    pub fn finish(&mut self) -> Vec<PipelineEvent> {
        self.motion.finish().map(PipelineEvent::MotionEnded).into_iter().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use neoscan_detector::{BandPowerOracle, Prediction};

    struct Constant(f64);

    impl Detector for Constant {
        fn predict(&self, _: &neoscan_core::Epoch) -> neoscan_detector::Result<Prediction> {
            Ok(Prediction { probability: self.0, relevance: None })
        }
    }

    fn frames(n: usize, from_seq: u32) -> Vec<SampleFrame> {
        (0..n)
            .map(|i| {
                let seq = from_seq + i as u32;
                SampleFrame { seq, t_us: seq as u64 * FRAME_PERIOD_US, accel: [0, 0, 16384], ..Default::default() }
            })
            .collect()
    }

    fn pipeline(p: f64) -> Pipeline {
        Pipeline::new(PipelineConfig::default(), MontageGraph::standard(), Arc::new(Constant(p))).unwrap()
    }

    fn epochs(ev: &[PipelineEvent]) -> Vec<&EpochReport> {
        ev.iter()
            .filter_map(|e| match e {
                PipelineEvent::Epoch(r) => Some(r),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn first_epoch_after_twelve_seconds_then_every_second() {
        let mut p = pipeline(0.1);
        let ev = p.push_frames(&frames(250 * 15, 0)).unwrap();
        let t: Vec<f64> = epochs(&ev).iter().map(|e| e.t_end_s).collect();
        assert_eq!(t, vec![12.0, 13.0, 14.0, 15.0]);
    }

    #[test]
    fn chunking_does_not_change_output() {
        let f = frames(250 * 14 + 17, 0);
        let mut a = pipeline(0.2);
        let whole: Vec<String> = a.push_frames(&f).unwrap().iter().map(PipelineEvent::to_line).collect();
        let mut b = pipeline(0.2);
        let mut parts = Vec::new();
        for c in f.chunks(37) {
            parts.extend(b.push_frames(c).unwrap().iter().map(PipelineEvent::to_line));
        }
        assert_eq!(whole, parts);
    }

    #[test]
    fn persistent_positives_fire_once() {
        let mut p = pipeline(0.9);
        let ev = p.push_frames(&frames(250 * 30, 0)).unwrap();
        let fired: Vec<_> = ev.iter().filter(|e| matches!(e, PipelineEvent::Seizure(_))).collect();
        assert_eq!(fired.len(), 1);
        assert_eq!(fired[0].to_line(), "EVENT seizure onset=12.000 declared=16.000 peak=0.9000");
    }

    #[test]
    fn short_gap_is_bridged_long_gap_restarts() {
        let mut p = pipeline(0.1);
        let mut f = frames(250 * 13, 0);
        f.extend(frames(250 * 2, 250 * 13 + 10));
        let ev = p.push_frames(&f).unwrap();
        assert!(ev.iter().any(|e| e.to_line() == format!("GAP seq={} missing=10 action=hold", 250 * 13)));
        assert_eq!(epochs(&ev).last().unwrap().t_end_s, 15.0);

        let mut p = pipeline(0.1);
        let mut f = frames(250 * 13, 0);
        f.extend(frames(250 * 2, 250 * 30));
        let ev = p.push_frames(&f).unwrap();
        assert!(ev.iter().any(|e| e.to_line().ends_with("action=restart")));
        assert_eq!(epochs(&ev).len(), 2);
    }

    #[test]
    fn fixture_detector_is_quiet_on_silence() {
        let mut p = Pipeline::new(PipelineConfig::default(), MontageGraph::standard(), Arc::new(BandPowerOracle::default()))
            .unwrap();
        let ev = p.push_frames(&frames(250 * 20, 0)).unwrap();
        assert!(epochs(&ev).iter().all(|e| e.probability == 0.0 && !e.motion));
    }

    #[test]
    fn line_format() {
        let e = PipelineEvent::Epoch(EpochReport {
            t_end_s: 12.0,
            probability: 0.25,
            top_channels: vec!["T3-O1".into(), "C3-Cz".into()],
            motion: true,
            latency: Duration::ZERO,
        });
        assert_eq!(e.to_line(), "12.000 0.2500 T3-O1,C3-Cz 1");
    }
}
