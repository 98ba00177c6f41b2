//! Subcommand implementations. Each writes its primary output to `out`.

use std::io::Write;
use std::net::TcpListener;
use std::path::Path;
use std::sync::mpsc::sync_channel;
use std::sync::Arc;
use std::time::Duration;

use ndarray::{s, Array2};

use neoscan_analysis::{state_report, ReportConfig, State, StateSegment};
use neoscan_artifact::{
    clean_window, BaselineRules, Cleaner, ComponentClassifier, IcaConfig, LinearClassifier, CLEAN_WINDOW_S,
};
use neoscan_core::dsp::{design_chebyshev2_bandpass, BiquadCascade, PreprocessChain};
use neoscan_core::epoch::DetectionRule;
use neoscan_core::montage::{MontageGraph, RECORDED};
use neoscan_core::{Recording, SampleFrame, DEVICE_FS_HZ};
use neoscan_detector::preprocess::model_bandpass;
use neoscan_detector::{init_container, BandPowerOracle, CnnGat, Detector, ModelConfig, WeightContainer};
use neoscan_stream::net::{connect_retry, receive_from, serve_once, stream_simulation, Pacing};
use neoscan_stream::session::IMU_ROWS;
use neoscan_stream::synth::parse_annotations;
use neoscan_stream::{
    write_edf, Annotation, DecodeOutput, DecoderStats, ImuSample, Segment, SessionHeader,
    SessionWriter, Simulator, SynthConfig,
};

use crate::cli::*;
use crate::config::AppConfig;
use crate::error::{CliError, Result};
use crate::inputs::{load_any, load_referential};
use crate::pipeline::{Pipeline, PipelineConfig, PipelineEvent, PipelineStats};
use crate::prepare::prepare;

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let cfg = AppConfig::resolve(cli.config.as_deref())?;
    match cli.command {
        Command::Simulate(a) => simulate(&cfg, &a, out),
        Command::Record(a) => record(&cfg, &a, out),
        Command::Monitor(a) => monitor(&cfg, &a, out),
        Command::Detect(a) => detect(&cfg, &a, out),
        Command::Clean(a) => clean(&a, out),
        Command::Analyze(a) => analyze(&a, out),
        Command::Prepare(a) => {
            let montage = cfg.montage_graph()?;
            let labels = a.annotations.clone().unwrap_or_else(|| a.edf_dir.clone());
            let s = prepare(&a.edf_dir, &labels, &a.out, !a.no_zscore, &montage)?;
            writeln!(out, "files {} epochs {} positive {} negative {}", s.files, s.epochs, s.positive, s.negative)?;
            Ok(())
        }
        Command::FilterDesign(a) => filter_design(&cfg, &a, out),
        Command::InitWeights(a) => {
            let montage = cfg.montage_graph()?;
            let mc = ModelConfig::reference();
            init_container(&mc, &montage, a.seed)?.save(&a.out)?;
            let (learnable, fixed) = mc.param_counts();
            writeln!(out, "wrote {} learnable {learnable} non-learnable {fixed}", a.out.display())?;
            Ok(())
        }
    }
}

fn segments(spans: &[(f64, f64)]) -> Vec<Segment> {
    spans.iter().map(|&(a, b)| Segment::new(a, b)).collect()
}

pub fn scenario(cfg: &AppConfig, a: &ScenarioArgs) -> Result<SynthConfig> {
    let mut sc = match &a.scenario {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("scenario: {e}")))?
        }
        None => cfg.simulator.clone(),
    };
    if let Some(v) = a.seed {
        sc.seed = v;
    }
    if a.noise_seed.is_some() {
        sc.noise_seed = a.noise_seed;
    }
    if let Some(v) = a.duration {
        sc.duration_s = v;
    }
    if !a.seizure.is_empty() {
        sc.seizures = segments(&a.seizure);
    }
    if !a.eyes_closed.is_empty() {
        sc.eyes_closed = segments(&a.eyes_closed);
    }
    if !a.movement.is_empty() {
        sc.movements = segments(&a.movement);
    }
    if let Some(v) = a.blinks_per_min {
        sc.blinks_per_min = v;
    }
    if let Some(v) = a.white_noise_uv {
        sc.white_noise_uv = v;
    }
    sc.validate().map_err(|e| CliError::Usage(format!("scenario: {e}")))?;
    Ok(sc)
}

fn write_annotations(path: &Path, anns: &[Annotation]) -> Result<()> {
    let text: String = anns.iter().map(|a| a.to_line() + "\n").collect();
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn referential_header() -> SessionHeader {
    SessionHeader::new(DEVICE_FS_HZ, RECORDED.iter().map(|s| s.to_string()).collect())
}

fn imu_row(s: &ImuSample) -> [f64; IMU_ROWS] {
    [s.accel_g[0], s.accel_g[1], s.accel_g[2], s.gyro_dps[0], s.gyro_dps[1], s.gyro_dps[2]]
}

/// Appends decoded frames to a session file in µV.
struct FrameRecorder {
    writer: SessionWriter,
    scale: neoscan_core::units::AdcScale,
}

impl FrameRecorder {
    fn create(path: &Path, device_id: &str) -> Result<Self> {
        let mut header = referential_header();
        header.device_id = device_id.into();
        let writer = SessionWriter::create(path, header)?;
        Ok(Self { writer, scale: Default::default() })
    }

    fn push(&mut self, frames: &[SampleFrame]) -> Result<()> {
        for f in frames {
            let uv: Vec<f64> = f.adc.iter().map(|&c| self.scale.to_microvolts(c)).collect();
            self.writer.push_sample(&uv, imu_row(&ImuSample::from_frame(f)))?;
        }
        Ok(())
    }

    fn finish(self) -> Result<u64> {
        Ok(self.writer.finish()?)
    }
}

fn simulate(cfg: &AppConfig, a: &SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let sc = scenario(cfg, &a.scenario)?;
    let mut sim = Simulator::new(sc)?;
    if let Some(p) = &a.annotations {
        write_annotations(p, &sim.annotations())?;
    }
    let sent = if let Some(path) = &a.out {
        let mut rec = FrameRecorder::create(path, "simulator")?;
        for ann in sim.annotations() {
            rec.writer.write_annotation(&ann)?;
        }
        let mut n = 0u64;
        loop {
            let frames = sim.next_frames(250);
            if frames.is_empty() {
                break;
            }
            n += frames.len() as u64;
            rec.push(&frames)?;
        }
        rec.finish()?;
        n
    } else {
        let addr = a.listen.clone().unwrap_or_else(|| cfg.endpoint.clone());
        let listener = TcpListener::bind(&addr).map_err(|e| CliError::Io(format!("cannot listen on {addr}: {e}")))?;
        log::info!("serving on {}", listener.local_addr()?);
        let pacing = if a.unpaced { Pacing::Unpaced } else { Pacing::RealTime };
        serve_once(&listener, &mut sim, a.frames_per_packet, pacing, None)?
    };
    writeln!(out, "frames {sent}")?;
    Ok(())
}

/// Reads the link, reconnecting up to `retries` times after a failure; a
/// clean close by the peer ends the session.
fn read_link(endpoint: &str, link: &ConnectArgs, sink: &mut impl FnMut(DecodeOutput) -> bool) -> Result<DecoderStats> {
    let delay = Duration::from_millis(link.retry_delay_ms);
    let mut total = DecoderStats::default();
    let mut left = link.retries;
    loop {
        let stream = connect_retry(endpoint.to_string(), left + 1, delay)
            .map_err(|e| CliError::Io(format!("cannot connect to {endpoint}: {e}")))?;
        match receive_from(stream, sink) {
            Ok(st) => {
                add_stats(&mut total, &st);
                return Ok(total);
            }
            Err(e) if left > 0 => {
                left -= 1;
                log::warn!("connection lost ({e}); {left} retries left");
            }
            Err(e) => return Err(CliError::Io(format!("connection lost: {e}"))),
        }
    }
}

fn add_stats(acc: &mut DecoderStats, s: &DecoderStats) {
    acc.packets_ok += s.packets_ok;
    acc.crc_failures += s.crc_failures;
    acc.framing_errors += s.framing_errors;
    acc.bytes_skipped += s.bytes_skipped;
    acc.gaps += s.gaps;
    acc.missing_frames += s.missing_frames;
    acc.stale_packets += s.stale_packets;
}

fn record(cfg: &AppConfig, a: &RecordArgs, out: &mut dyn Write) -> Result<()> {
    let endpoint = a.link.connect.clone().unwrap_or_else(|| cfg.endpoint.clone());
    let mut rec = FrameRecorder::create(&a.out, &endpoint)?;
    if let Some(p) = &a.annotations {
        for ann in parse_annotations(&std::fs::read_to_string(p)?)? {
            rec.writer.write_annotation(&ann)?;
        }
    }
    let mut failure = None;
    let stats = read_link(&endpoint, &a.link, &mut |o: DecodeOutput| match rec.push(&o.frames) {
        Ok(()) => true,
        Err(e) => {
            failure = Some(e);
            false
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let n = rec.finish()?;
    writeln!(out, "samples {n} packets {} crc_failures {} gaps {}", stats.packets_ok, stats.crc_failures, stats.gaps)?;
    Ok(())
}

pub fn build_detector(cfg: &AppConfig, a: &DetectorArgs, montage: &MontageGraph) -> Result<Arc<dyn Detector>> {
    match a.detector {
        DetectorKind::Fixture => Ok(Arc::new(BandPowerOracle::default())),
        DetectorKind::Model => {
            let path = a.weights.clone().or_else(|| cfg.weights.clone()).ok_or_else(|| {
                CliError::Usage("no weight container: pass --weights, set `weights` in the config, or run init-weights".into())
            })?;
            let w = WeightContainer::load(&path)?;
            Ok(Arc::new(CnnGat::from_container(&w, montage)?))
        }
    }
}

pub fn pipeline_config(cfg: &AppConfig, a: &DetectorArgs) -> Result<PipelineConfig> {
    let threshold = a.threshold.unwrap_or(cfg.threshold);
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(CliError::Usage(format!("threshold {threshold} must lie in (0, 1)")));
    }
    Ok(PipelineConfig {
        edges: a.edges.map(Into::into).unwrap_or(cfg.edge_normalization),
        rule: DetectionRule { threshold, min_persistence_s: cfg.min_persistence_s, hop_s: 1.0 },
        motion: cfg.motion,
        ..Default::default()
    })
}

fn emit(out: &mut dyn Write, events: &[PipelineEvent], quiet: bool) -> Result<()> {
    for e in events {
        if quiet && matches!(e, PipelineEvent::Epoch(_)) {
            continue;
        }
        writeln!(out, "{}", e.to_line())?;
    }
    Ok(())
}

fn summary_line(p: &PipelineStats, d: Option<&DecoderStats>) -> String {
    let mean_ms = if p.epochs > 0 { p.total_latency.as_secs_f64() * 1e3 / p.epochs as f64 } else { 0.0 };
    let mut s = format!(
        "SUMMARY samples={} epochs={} events={} motion_alerts={} gaps={} max_hop_ms={:.2} mean_hop_ms={:.2}",
        p.samples,
        p.epochs,
        p.events,
        p.motion_alerts,
        p.gaps,
        p.max_hop_latency.as_secs_f64() * 1e3,
        mean_ms
    );
    if let Some(d) = d {
        s += &format!(" packets={} crc_failures={} framing_errors={}", d.packets_ok, d.crc_failures, d.framing_errors);
    }
    s
}

enum SinkMsg {
    Frames(Vec<SampleFrame>),
    Lines(Vec<PipelineEvent>),
}

/// Three stages joined by bounded channels: link reader, pipeline, and the
/// output/recording sink on the calling thread. Each stage drains its input
/// before closing its output.
fn monitor(cfg: &AppConfig, a: &MonitorArgs, out: &mut dyn Write) -> Result<()> {
    let montage = cfg.montage_graph()?;
    let detector = build_detector(cfg, &a.detector, &montage)?;
    let mut pipeline = Pipeline::new(pipeline_config(cfg, &a.detector)?, montage, detector)?;
    let endpoint = a.link.connect.clone().unwrap_or_else(|| cfg.endpoint.clone());
    let mut recorder = a.record.as_deref().map(|p| FrameRecorder::create(p, &endpoint)).transpose()?;
    let recording = recorder.is_some();
    let quiet = a.detector.quiet;

    let (tx_in, rx_in) = sync_channel::<DecodeOutput>(64);
    let (tx_out, rx_out) = sync_channel::<SinkMsg>(256);
    let (link, processed, sunk) = std::thread::scope(|scope| {
        let link = a.link.clone();
        let endpoint = endpoint.clone();
        let reader = scope.spawn(move || read_link(&endpoint, &link, &mut |o| tx_in.send(o).is_ok()));
        let worker = scope.spawn(move || -> Result<PipelineStats> {
            for o in rx_in {
                let events = pipeline.push_frames(&o.frames)?;
                if recording && tx_out.send(SinkMsg::Frames(o.frames)).is_err() {
                    break;
                }
                if !events.is_empty() && tx_out.send(SinkMsg::Lines(events)).is_err() {
                    break;
                }
            }
            let tail = pipeline.finish();
            let _ = tx_out.send(SinkMsg::Lines(tail));
            Ok(pipeline.stats().clone())
        });
        let sink = || -> Result<()> {
            for msg in rx_out {
                match msg {
                    SinkMsg::Frames(f) => {
                        if let Some(r) = recorder.as_mut() {
                            r.push(&f)?;
                        }
                    }
                    SinkMsg::Lines(ev) => emit(out, &ev, quiet)?,
                }
            }
            Ok(())
        };
        let sunk = sink();
        (reader.join().expect("reader thread"), worker.join().expect("pipeline thread"), sunk)
    });
    if let Some(r) = recorder {
        r.finish()?;
    }
    sunk?;
    let stats = processed?;
    match link {
        Ok(d) => {
            writeln!(out, "{}", summary_line(&stats, Some(&d)))?;
            Ok(())
        }
        Err(e) => {
            writeln!(out, "{}", summary_line(&stats, None))?;
            Err(e)
        }
    }
}

fn detect(cfg: &AppConfig, a: &DetectArgs, out: &mut dyn Write) -> Result<()> {
    let l = load_referential(&a.input)?;
    if l.rec.fs_hz() != DEVICE_FS_HZ {
        return Err(CliError::Usage(format!("detection expects {DEVICE_FS_HZ} Hz input, got {}", l.rec.fs_hz())));
    }
    let montage = cfg.montage_graph()?;
    let detector = build_detector(cfg, &a.detector, &montage)?;
    let mut p = Pipeline::new(pipeline_config(cfg, &a.detector)?, montage, detector)?;
    let data = l.rec.data();
    let step = DEVICE_FS_HZ as usize;
    for i0 in (0..data.ncols()).step_by(step) {
        let i1 = (i0 + step).min(data.ncols());
        let imu = l.imu.as_ref().map(|m| &m[i0..i1]);
        let ev = p.push_block(data.slice(s![.., i0..i1]), imu)?;
        emit(out, &ev, a.detector.quiet)?;
    }
    let tail = p.finish();
    emit(out, &tail, a.detector.quiet)?;
    writeln!(out, "{}", summary_line(p.stats(), None))?;
    Ok(())
}

fn clean(a: &CleanArgs, out: &mut dyn Write) -> Result<()> {
    let l = load_referential(&a.input)?;
    let fs = l.rec.fs_hz();
    let electrodes = MontageGraph::standard().electrodes().clone();
    let classifier: Box<dyn ComponentClassifier> = match &a.classifier {
        Some(p) => Box::new(LinearClassifier::from_container(&WeightContainer::load(p)?)?),
        None => Box::new(BaselineRules::default()),
    };
    let ica = IcaConfig { seed: a.seed, ..Default::default() };
    let x = l.rec.data();
    let window = (CLEAN_WINDOW_S * fs) as usize;
    let mut cleaned = Array2::zeros(x.raw_dim());
    let mut table = String::from(
        "window\tcomponent\tclass\tconfidence\tkurtosis\tlow_ratio\tline_ratio\tfrontal_fraction\tstale\trationale\n",
    );
    let mut removed = 0;
    let mut windows = 0;
    let record = |table: &mut String, w: usize, o: &neoscan_artifact::CleanOutput| {
        for (f, lab) in o.features.iter().zip(&o.labels) {
            table.push_str(&format!(
                "{w}\t{}\t{}\t{:.3}\t{:.3}\t{:.3}\t{:.3}\t{:.3}\t{}\t{}\n",
                f.index,
                if lab.is_artifact() { "artifact" } else { "keep" },
                lab.confidence,
                f.kurtosis,
                f.low_ratio,
                f.line_ratio,
                f.frontal_fraction,
                u8::from(o.stale),
                lab.rationale
            ));
        }
    };
    if x.ncols() < window {
        log::warn!("recording shorter than {CLEAN_WINDOW_S} s; decomposing it as a single window");
        let o = clean_window(x, fs, &electrodes, classifier.as_ref(), &ica)?;
        cleaned.assign(&o.cleaned);
        removed += o.n_removed();
        windows = 1;
        record(&mut table, 0, &o);
    } else {
        let mut cleaner = Cleaner::new(fs, electrodes, classifier, ica);
        for (w, i0) in (0..x.ncols()).step_by(window).enumerate() {
            let i1 = (i0 + window).min(x.ncols());
            let o = cleaner.clean(x.slice(s![.., i0..i1]))?;
            cleaned.slice_mut(s![.., i0..i1]).assign(&o.cleaned);
            removed += o.n_removed();
            windows += 1;
            record(&mut table, w, &o);
        }
    }
    let mut rec = Recording::new(fs, l.rec.channels().to_vec(), cleaned)?;
    rec.meta = l.rec.meta.clone();
    if crate::inputs::is_edf(&a.out) {
        write_edf(&a.out, &rec)?;
    } else {
        let mut header = SessionHeader::new(fs, rec.channels().to_vec());
        header.extra.insert("cleaned".into(), "ica".into());
        let mut w = SessionWriter::create(&a.out, header)?;
        for ann in &l.annotations {
            w.write_annotation(ann)?;
        }
        let imu = l.imu.as_ref().map(|m| m.iter().map(imu_row).collect::<Vec<_>>());
        for i in 0..rec.n_samples() {
            let col: Vec<f64> = rec.data().column(i).to_vec();
            w.push_sample(&col, imu.as_ref().map(|m| m[i]).unwrap_or([0.0; IMU_ROWS]))?;
        }
        w.finish()?;
    }
    if let Some(p) = &a.components {
        std::fs::write(p, table)?;
    }
    writeln!(out, "windows {windows} removed {removed}")?;
    Ok(())
}

fn state_file_name(s: &State) -> String {
    let name: String = s.to_string().chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect();
    format!("spectra_{name}.tsv")
}

fn analyze(a: &AnalyzeArgs, out: &mut dyn Write) -> Result<()> {
    let da = load_any(&a.device_a)?;
    let db = load_any(&a.device_b)?;
    let text = std::fs::read_to_string(&a.states).map_err(|e| CliError::Io(format!("{}: {e}", a.states.display())))?;
    let segs: Vec<StateSegment> = parse_annotations(&text)?
        .into_iter()
        .map(|x| StateSegment::new(x.t_start_s, x.t_end_s, State::parse(&x.label)))
        .collect();
    let cfg = ReportConfig {
        max_lag_s: a.max_lag,
        prefilter: !a.no_prefilter,
        bootstrap_resamples: a.resamples,
        seed: a.seed,
        ..Default::default()
    };
    let names = [a.names[0].as_str(), a.names[1].as_str()];
    let rep = state_report(&da.rec, &db.rec, names, &segs, &cfg)?;
    std::fs::create_dir_all(&a.out)?;
    std::fs::write(a.out.join("correlation.tsv"), rep.correlation_tsv())?;
    std::fs::write(a.out.join("snr.tsv"), rep.snr_tsv())?;
    for s in &rep.states {
        if let Some(t) = rep.spectra_tsv(&s.state) {
            std::fs::write(a.out.join(state_file_name(&s.state)), t)?;
        }
    }
    let notices: String = rep.notices.iter().map(|n| n.clone() + "\n").collect();
    std::fs::write(a.out.join("notices.txt"), &notices)?;
    for n in &rep.notices {
        log::info!("{n}");
    }
    write!(out, "{}", rep.correlation_tsv())?;
    Ok(())
}

const RESPONSE_FREQS_HZ: [f64; 20] =
    [0.1, 0.5, 1.0, 2.0, 4.0, 8.0, 13.0, 16.0, 20.0, 30.0, 40.0, 45.0, 48.0, 50.0, 52.0, 60.0, 80.0, 100.0, 110.0, 124.0];

fn describe(out: &mut dyn Write, title: &str, c: &BiquadCascade, fs: f64) -> Result<()> {
    writeln!(out, "# {title}")?;
    write!(out, "{}", c.to_text())?;
    writeln!(out, "freq_hz\tgain_db")?;
    for f in RESPONSE_FREQS_HZ.iter().filter(|&&f| f < fs / 2.0) {
        writeln!(out, "{f}\t{:.2}", c.magnitude_db(*f, fs))?;
    }
    writeln!(out)?;
    Ok(())
}

fn filter_design(cfg: &AppConfig, a: &FilterDesignArgs, out: &mut dyn Write) -> Result<()> {
    let edges = a.edges.map(Into::into).unwrap_or(cfg.edge_normalization);
    let all = a.kind == FilterKind::All;
    if all || a.kind == FilterKind::Realtime {
        let c = PreprocessChain::new(a.fs, edges)?.cascade();
        describe(out, &format!("real-time chain, band-pass plus notches, edges {edges:?}"), &c, a.fs)?;
    }
    if all || a.kind == FilterKind::Model {
        if a.fs != DEVICE_FS_HZ {
            return Err(CliError::Usage(format!("the model band-pass is fixed at {DEVICE_FS_HZ} Hz")));
        }
        describe(out, "model input band-pass, applied forward and backward", model_bandpass(), a.fs)?;
    }
    if all || a.kind == FilterKind::Correlation {
        let c = design_chebyshev2_bandpass(6, 2.0, 30.0, 40.0, a.fs)?;
        describe(out, "correlation band-pass 2-30 Hz", &c, a.fs)?;
    }
    Ok(())
}

/// Streams a whole simulation as packets, for replay and benchmarking.
pub fn simulation_bytes(sc: SynthConfig, per_packet: usize) -> Result<(Vec<u8>, Vec<Annotation>)> {
    let mut sim = Simulator::new(sc)?;
    let anns = sim.annotations();
    let mut buf = Vec::new();
    stream_simulation(&mut sim, &mut buf, per_packet, Pacing::Unpaced)?;
    Ok((buf, anns))
}

/// Writes a session file holding `frames`, for tests and tooling.
pub fn write_frames_session(path: &Path, frames: &[SampleFrame]) -> Result<()> {
    let mut r = FrameRecorder::create(path, "file")?;
    r.push(frames)?;
    r.finish()?;
    Ok(())
}
