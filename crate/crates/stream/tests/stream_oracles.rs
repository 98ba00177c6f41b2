use std::net::TcpListener;

use neoscan_core::dsp::welch_psd;
use neoscan_core::montage::{derive_bipolar, MontageGraph};
use neoscan_core::units::AdcScale;
use neoscan_stream::net::{receive, serve_once, Pacing};
use neoscan_stream::packet::encode_frames;
use neoscan_stream::synth::parse_annotations;
use neoscan_stream::{
    decode_stream, frames_to_imu, frames_to_recording, read_session, SessionHeader, SessionWriter, Segment, Simulator,
    SynthConfig,
};

fn frames(cfg: SynthConfig) -> Vec<neoscan_core::SampleFrame> {
    Simulator::new(cfg).unwrap().collect()
}

#[test]
fn line_only_config_peaks_at_50_hz() {
    let f = frames(SynthConfig::line_only(10.0, 8.0));
    let (out, stats) = decode_stream(&encode_frames(&f, 10).unwrap());
    assert_eq!(stats.crc_failures, 0);
    let rec = frames_to_recording(&out.frames, AdcScale::default()).unwrap();
    for row in rec.data().rows() {
        let s = welch_psd(row.as_slice().unwrap(), 250.0, 500, 0.5).unwrap();
        assert_eq!(s.freqs_hz[s.peak_bin()], 50.0);
    }
}

#[test]
fn alpha_dominates_occipital_channels() {
    let cfg = SynthConfig { duration_s: 30.0, eyes_closed: vec![Segment::new(0.0, 30.0)], ..Default::default() };
    let rec = frames_to_recording(&frames(cfg), AdcScale::default()).unwrap();
    let bip = derive_bipolar(&rec, &MontageGraph::standard()).unwrap();
    for name in ["T3-O1", "C3-O1", "T4-O2", "C4-O2"] {
        let c = bip.channel_index(name).unwrap();
        let x = bip.data().row(c).to_vec();
        let s = welch_psd(&x, 250.0, 500, 0.5).unwrap();
        let alpha = s.band_power(8.0, 13.0);
        for (lo, hi) in [(3.0, 8.0), (13.0, 18.0)] {
            let adj = s.band_power(lo, hi);
            assert!(alpha >= 3.0 * adj, "{name}: alpha {alpha} vs {lo}-{hi} {adj}");
        }
    }
}

#[test]
fn seizure_annotation_marks_exact_seconds() {
    let cfg = SynthConfig { duration_s: 120.0, seizures: vec![Segment::new(60.0, 90.0)], ..Default::default() };
    let sim = Simulator::new(cfg).unwrap();
    let text: String = sim.annotations().iter().map(|a| a.to_line() + "\n").collect();
    let back = parse_annotations(&text).unwrap();
    assert_eq!(back.len(), 1);
    assert_eq!((back[0].t_start_s, back[0].t_end_s, back[0].label.as_str()), (60.0, 90.0, "seizure"));
    let mask = neoscan_core::epoch::SeizureMask::from_intervals(&[(back[0].t_start_s, back[0].t_end_s)], 120);
    let marked: Vec<usize> = (0..120).filter(|&s| mask.as_slice()[s]).collect();
    assert_eq!(marked, (60..90).collect::<Vec<_>>());
}

#[test]
fn tcp_round_trip_matches_simulator() {
    let cfg = SynthConfig { duration_s: 4.0, seed: 9, blinks_per_min: 30.0, ..Default::default() };
    let expected = frames(cfg.clone());
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let server = std::thread::spawn(move || {
        let mut sim = Simulator::new(cfg).unwrap();
        let mut notes = Vec::new();
        let n = serve_once(&listener, &mut sim, 10, Pacing::Unpaced, Some(&mut notes)).unwrap();
        (n, String::from_utf8(notes).unwrap())
    });
    let mut got = Vec::new();
    let stats = receive(addr, |out| {
        got.extend(out.frames);
        true
    })
    .unwrap();
    let (sent, notes) = server.join().unwrap();
    assert_eq!(sent, 1000);
    assert_eq!(got, expected);
    assert_eq!(stats.gaps, 0);
    assert!(parse_annotations(&notes).unwrap().iter().all(|a| a.label == "blink"));
}

fn record(path: &std::path::Path, secs: f64) -> SessionHeader {
    let f = frames(SynthConfig { duration_s: secs, ..Default::default() });
    let rec = frames_to_recording(&f, AdcScale::default()).unwrap();
    let imu = neoscan_stream::convert::imu_matrix(&frames_to_imu(&f));
    let mut h = SessionHeader::new(250.0, rec.channels().to_vec());
    h.device_id = "sim".into();
    h.montage = "double-banana".into();
    h.gain = 24.0;
    h.vref_v = 4.5;
    let mut w = SessionWriter::create(path, h.clone()).unwrap();
    w.push_block(rec.data(), imu.view()).unwrap();
    w.finish().unwrap();
    h
}

#[test]
fn ten_second_session_reads_back() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.neo");
    let h = record(&p, 10.0);
    let s = read_session(&p).unwrap();
    assert_eq!(s.n_samples(), 2500);
    assert_eq!(s.data.nrows(), 8);
    assert_eq!(s.header.gain, h.gain);
    assert_eq!(s.header.vref_v, h.vref_v);
    assert_eq!(s.header.montage, "double-banana");
    let f = frames(SynthConfig { duration_s: 10.0, ..Default::default() });
    let rec = frames_to_recording(&f, AdcScale::default()).unwrap();
    for (a, b) in s.data.iter().zip(rec.data().iter()) {
        assert!((a - b).abs() <= b.abs() * 1e-7 + 1e-9);
    }
}

#[test]
fn killed_writer_keeps_complete_chunks() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("b.neo");
    record(&p, 10.0);
    let full = std::fs::read(&p).unwrap();
    // cut in the middle of the last chunk
    let cut = full.len() - 500;
    std::fs::write(&p, &full[..cut]).unwrap();
    let s = read_session(&p).unwrap();
    assert_eq!(s.n_samples(), 2250);
    assert!(s.is_truncated());
}
