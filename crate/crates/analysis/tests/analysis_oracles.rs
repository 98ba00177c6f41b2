use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use neoscan_analysis::{
    aligned_correlation, bootstrap_mean_ci, pearson, snr_alpha, snr_powerline, state_report, ReportConfig, State,
    StateSegment,
};
use neoscan_core::units::AdcScale;
use neoscan_core::Recording;
use neoscan_stream::{frames_to_recording, Segment, Simulator, SynthConfig};

fn white(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn device(cfg: SynthConfig) -> Recording {
    let frames: Vec<_> = Simulator::new(cfg).unwrap().collect();
    frames_to_recording(&frames, AdcScale::default()).unwrap()
}

fn session(noise_seed: u64, white_noise_uv: f64) -> Recording {
    device(SynthConfig {
        seed: 11,
        noise_seed: Some(noise_seed),
        duration_s: 40.0,
        white_noise_uv,
        eyes_closed: vec![Segment::new(20.0, 30.0)],
        seizures: vec![Segment::new(30.0, 40.0)],
        ..Default::default()
    })
}

fn three_states() -> Vec<StateSegment> {
    vec![
        StateSegment::new(2.0, 18.0, State::EyesOpen),
        StateSegment::new(21.0, 29.0, State::EyesClosed),
        StateSegment::new(31.0, 39.0, State::Seizure),
    ]
}

#[test]
fn independent_white_noise_is_uncorrelated() {
    for seed in 0..10 {
        let r = aligned_correlation(&white(7500, seed), &white(7500, seed + 100), 250.0, 0.0).unwrap();
        assert!(r.r.abs() < 0.1, "seed {seed}: {}", r.r);
    }
}

#[test]
fn white_noise_alpha_snr_follows_bandwidth() {
    let expected = 10.0 * (5.0f64 / 23.0).log10();
    for seed in 0..5 {
        let s = snr_alpha(&white(75_000, seed), 250.0).unwrap();
        assert!((s.db - expected).abs() <= 1.0, "seed {seed}: {} vs {expected}", s.db);
    }
}

#[test]
fn simulated_line_noise_is_measured() {
    let r = session(1, 1.0);
    let s = snr_powerline(&r.data().row(0).to_vec(), 250.0).unwrap();
    assert!(s.db.is_finite() && !s.saturated);
}

#[test]
fn identical_devices_correlate_perfectly() {
    let a = session(1, 1.0);
    let rep = state_report(&a, &a, ["a", "b"], &three_states(), &ReportConfig::default()).unwrap();
    assert_eq!(rep.states.len(), 3);
    for s in &rep.states {
        assert!(s.correlations.iter().all(|r| (r - 1.0).abs() < 1e-9), "{}", s.state);
        assert!((s.ci.0 - 1.0).abs() < 1e-9 && (s.ci.1 - 1.0).abs() < 1e-9);
    }
    assert_eq!(rep.snr[0].overall, rep.snr[1].overall);
}

#[test]
fn correlation_falls_as_independent_noise_rises() {
    let a = session(1, 1.0);
    let mut last = f64::INFINITY;
    for level in [1.0, 5.0, 15.0, 40.0] {
        let b = session(2, level);
        let rep = state_report(&a, &b, ["a", "b"], &three_states(), &ReportConfig::default()).unwrap();
        let r = rep.state(&State::EyesOpen).unwrap().mean_r;
        assert!(r < last, "noise {level}: {r} not below {last}");
        last = r;
    }
    assert!(last < 0.9);
}

#[test]
fn segment_inventory_is_echoed() {
    let a = session(1, 1.0);
    let b = session(2, 2.0);
    let mut segs = vec![];
    for (state, count) in [(State::EyesOpen, 7), (State::EyesClosed, 6), (State::Seizure, 4)] {
        for _ in 0..count {
            let t = segs.len() as f64 * 2.2;
            segs.push(StateSegment::new(t, t + 2.1, state.clone()));
        }
    }
    let rep = state_report(&a, &b, ["a", "b"], &segs, &ReportConfig::default()).unwrap();
    let counts: Vec<usize> = rep.states.iter().map(|s| s.n_segments).collect();
    assert_eq!(counts, vec![7, 6, 4]);
    assert!(rep.notices.iter().any(|n| n.contains("eyes-open: 7 segments")));
    let tsv = rep.correlation_tsv();
    assert!(tsv.lines().nth(2).unwrap().starts_with("eyes-closed\t6\t"));
}

#[test]
fn missing_state_is_omitted_with_notice() {
    let a = session(1, 1.0);
    let segs = vec![StateSegment::new(2.0, 18.0, State::EyesOpen)];
    let rep = state_report(&a, &a, ["a", "b"], &segs, &ReportConfig::default()).unwrap();
    assert_eq!(rep.states.len(), 1);
    assert!(rep.notices.iter().any(|n| n.contains("no segments for state seizure")));
    assert!(rep.spectra_tsv(&State::Seizure).is_none());
    let plot = rep.spectra_tsv(&State::EyesOpen).unwrap();
    assert!(plot.starts_with("freq_hz\ta\tb\n"));
    assert_eq!(plot.lines().count(), 1 + 251);
}

#[test]
fn report_exposes_three_snr_aggregations() {
    let a = session(1, 1.0);
    let rep = state_report(&a, &session(2, 3.0), ["a", "b"], &three_states(), &ReportConfig::default()).unwrap();
    let d = &rep.snr[1];
    assert_eq!(d.by_channel.len(), 8);
    assert_eq!(d.by_segment.len(), 3);
    assert!(d.overall.powerline_db.is_finite() && d.overall.alpha_db.is_finite());
    let ec = d.by_segment[1].1.alpha_db;
    let eo = d.by_segment[0].1.alpha_db;
    assert!(ec > eo, "eyes-closed alpha SNR {ec} should exceed eyes-open {eo}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pearson_is_affine_invariant(seed in 0u64..1000, sa in 0.01f64..100.0, sb in -100.0f64..-0.01, oa in -1e3f64..1e3, ob in -1e3f64..1e3) {
        let x = white(500, seed);
        let y: Vec<f64> = white(500, seed + 1).iter().zip(&x).map(|(n, v)| n + 0.5 * v).collect();
        let r = pearson(&x, &y).unwrap();
        let x2: Vec<f64> = x.iter().map(|v| sa * v + oa).collect();
        let y2: Vec<f64> = y.iter().map(|v| sb * v + ob).collect();
        prop_assert!((pearson(&x2, &y2).unwrap() + r).abs() < 1e-9);
    }

    #[test]
    fn snr_is_scale_invariant(seed in 0u64..1000, k in 1e-3f64..1e3) {
        let x: Vec<f64> = white(2500, seed).iter().enumerate()
            .map(|(i, v)| v + 3.0 * (2.0 * std::f64::consts::PI * 50.0 * i as f64 / 250.0).sin()).collect();
        let y: Vec<f64> = x.iter().map(|v| v * k).collect();
        prop_assert!((snr_powerline(&x, 250.0).unwrap().db - snr_powerline(&y, 250.0).unwrap().db).abs() < 1e-9);
        prop_assert!((snr_alpha(&x, 250.0).unwrap().db - snr_alpha(&y, 250.0).unwrap().db).abs() < 1e-9);
    }

    #[test]
    fn bootstrap_ci_contains_mean(v in proptest::collection::vec(-1.0f64..1.0, 1..60), seed in 0u64..100) {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let (lo, hi) = bootstrap_mean_ci(&v, 1000, 0.95, seed);
        prop_assert!(lo <= hi);
        prop_assert!(lo <= m + 1e-12 && m <= hi + 1e-12, "{lo} {m} {hi}");
    }
}
