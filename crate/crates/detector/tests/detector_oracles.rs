use std::time::Instant;

use ndarray::Array2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use neoscan_core::montage::MontageGraph;
use neoscan_core::Epoch;
use neoscan_detector::model::with_self_loops;
use neoscan_detector::{grad_cam, init_container, CnnGat, GatLayer, ModelConfig, Tensor, WeightContainer};

fn gaussian(rows: usize, cols: usize, seed: u64, sd: f64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = Normal::new(0.0, sd).unwrap();
    Array2::from_shape_fn((rows, cols), |_| d.sample(&mut rng))
}

fn model(seed: u64) -> CnnGat {
    CnnGat::random(&ModelConfig::reference(), &MontageGraph::standard(), seed).unwrap()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn final_gat_gradient_matches_central_differences() {
    let h = 1e-3;
    for seed in 0..20 {
        let m = model(seed);
        let out = m.forward_matrix(gaussian(12, 384, 100 + seed, 1.0).view()).unwrap();
        let g = m.logit_grad_final_gat(&out.activations);
        let base = out.activations.final_gat().clone();
        let v = gaussian(base.nrows(), base.ncols(), 200 + seed, 1.0);
        let analytic: f64 = (&g * &v).sum();
        let fd = (m.logit_from_final_gat(&(&base + &(&v * h))) - m.logit_from_final_gat(&(&base - &(&v * h)))) / (2.0 * h);
        assert!(rel_err(analytic, fd) <= 1e-4, "seed {seed}: {analytic} vs {fd}");
    }
}

#[test]
fn attention_backward_matches_central_differences() {
    let h = 1e-4;
    let g = MontageGraph::standard();
    let adj = with_self_loops(g.adjacency());
    for seed in 0..5 {
        let m = model(seed);
        let out = m.forward_matrix(gaussian(12, 384, 300 + seed, 1.0).view()).unwrap();
        let grad = m.logit_grad_node_features(&out.activations);
        let x0 = out.activations.node_features.clone();
        let v = gaussian(x0.nrows(), x0.ncols(), 400 + seed, 1.0);
        let logit = |x: Array2<f64>| m.head(x, vec![], &adj).unwrap().logit;
        let fd = (logit(&x0 + &(&v * h)) - logit(&x0 - &(&v * h))) / (2.0 * h);
        let analytic: f64 = (&grad * &v).sum();
        assert!(rel_err(analytic, fd) <= 1e-4, "seed {seed}: {analytic} vs {fd}");
    }
}

fn permute(adj: &[Vec<bool>], p: &[usize]) -> Vec<Vec<bool>> {
    (0..p.len()).map(|i| (0..p.len()).map(|j| adj[p[i]][p[j]]).collect()).collect()
}

#[test]
fn channel_permutation_leaves_probability_unchanged() {
    let m = model(7);
    let x = gaussian(12, 384, 8, 1.0);
    let p = [3, 7, 0, 11, 5, 1, 9, 2, 10, 4, 8, 6];
    let xp = Array2::from_shape_fn((12, 384), |(i, t)| x[[p[i], t]]);
    let a = m.forward_matrix(x.view()).unwrap().probability;
    let b = m.forward_with_adjacency(xp.view(), &permute(m.adjacency(), &p)).unwrap().probability;
    assert!((a - b).abs() < 1e-12, "{a} vs {b}");
}

fn identity_layer(f: usize) -> GatLayer {
    let mut weight = vec![0.0; f * f];
    for i in 0..f {
        weight[i * f + i] = 1.0;
    }
    GatLayer { f_in: f, f_out: f, weight, att_src: vec![0.0; f], att_dst: vec![0.0; f], bias: vec![0.0; f], slope: 0.2 }
}

#[test]
fn uniform_attention_on_equal_neighbors_returns_transformed_feature() {
    // path graph 0-1-2-3 with self-loops; nodes 0..=2 carry the same vector
    let layer = identity_layer(3);
    let adj = with_self_loops(&[
        vec![false, true, false, false],
        vec![true, false, true, false],
        vec![false, true, false, true],
        vec![false, false, true, false],
    ]);
    let x = Array2::from_shape_vec((4, 3), vec![0.5, -0.3, 2.0, 0.5, -0.3, 2.0, 0.5, -0.3, 2.0, 9.0, 9.0, 9.0]).unwrap();
    let c = layer.forward(x.view(), &adj).unwrap();
    for (j, &v) in [0.5f64, -0.3, 2.0].iter().enumerate() {
        let expect = if v > 0.0 { v } else { v.exp_m1() };
        assert!((c.output[[1, j]] - expect).abs() < 1e-15);
        assert!((c.output[[0, j]] - expect).abs() < 1e-15);
    }
    assert!((c.attention[[1, 0]] - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn removing_an_edge_only_changes_its_endpoints() {
    let m = model(11);
    let layer = &m.gat_layers()[0];
    let x = gaussian(12, 192, 12, 1.0);
    let adj = m.adjacency().to_vec();
    let (i, j) = (0..12)
        .flat_map(|i| (0..12).map(move |j| (i, j)))
        .find(|&(i, j)| i != j && adj[i][j])
        .unwrap();
    let mut cut = adj.clone();
    cut[i][j] = false;
    cut[j][i] = false;
    let a = layer.forward(x.view(), &adj).unwrap().output;
    let b = layer.forward(x.view(), &cut).unwrap().output;
    for n in 0..12 {
        let changed = a.row(n).iter().zip(b.row(n)).any(|(p, q)| p != q);
        assert_eq!(changed, n == i || n == j, "node {n}");
    }
}

fn zero_dense(seed: u64) -> CnnGat {
    let g = MontageGraph::standard();
    let cfg = ModelConfig::reference();
    let mut w = init_container(&cfg, &g, seed).unwrap();
    let names: Vec<String> = w.names().filter(|n| n.starts_with("dense")).map(String::from).collect();
    for n in names {
        let t = w.get(&n).unwrap().clone();
        w.insert(&n, Tensor::new(t.shape.clone(), vec![0.0; t.data.len()]).unwrap());
    }
    CnnGat::from_container(&w, &g).unwrap()
}

#[test]
fn zero_dense_head_gives_zero_relevance() {
    let m = zero_dense(3);
    let e = Epoch::new(gaussian(12, 384, 4, 1.0), 0).unwrap();
    let (out, rel) = grad_cam(&m, &e).unwrap();
    assert_eq!(out.probability, 0.5);
    assert!(rel.channel_scores.iter().all(|&v| v == 0.0));
    assert!(rel.temporal_scores.iter().all(|&v| v == 0.0));
    assert_eq!(rel.temporal_scores.len(), 384);
}

/// Parameter count written out layer by layer, independent of the tensor list.
fn count_by_hand(c: &ModelConfig) -> (usize, usize) {
    let conv = |cin: usize, cout: usize, k: usize| cout * cin * k + cout;
    let mut learn = 0;
    let mut fixed = 0;
    learn += conv(1, c.stem_channels, c.stem_kernels[0]) + conv(1, c.stem_channels, c.stem_kernels[1]);
    learn += 2 * c.stem_channels;
    fixed += 2 * c.stem_channels;
    for b in &c.res_blocks {
        learn += conv(b.in_channels, b.out_channels, b.kernel) + conv(b.out_channels, b.out_channels, b.kernel);
        learn += 4 * b.out_channels;
        fixed += 4 * b.out_channels;
        if b.in_channels != b.out_channels {
            learn += conv(b.in_channels, b.out_channels, 1);
        }
    }
    let mut f = c.cnn_channels() * c.cnn_time();
    for &g in &c.gat_dims {
        learn += f * g + 3 * g;
        f = g;
    }
    for &d in c.dense_dims.iter().chain([1].iter()) {
        learn += f * d + d;
        f = d;
    }
    (learn, fixed)
}

#[test]
fn parameter_audit() {
    let c = ModelConfig::reference();
    let (l, n) = c.param_counts();
    assert_eq!((l, n), count_by_hand(&c));
    println!("learnable {l} (distance {}), non-learnable {n} (distance {})", l.abs_diff(46_612), n.abs_diff(208));
}

#[test]
fn forward_and_relevance_fit_the_latency_budget() {
    let m = model(1);
    let e = Epoch::new(gaussian(12, 384, 2, 1.0), 0).unwrap();
    grad_cam(&m, &e).unwrap();
    let mut times: Vec<f64> = (0..15)
        .map(|_| {
            let t = Instant::now();
            grad_cam(&m, &e).unwrap();
            t.elapsed().as_secs_f64()
        })
        .collect();
    times.sort_by(f64::total_cmp);
    let median_ms = times[times.len() / 2] * 1e3;
    assert!(median_ms < 50.0, "{median_ms} ms");
}

#[test]
fn container_file_round_trip_preserves_inference() {
    let g = MontageGraph::standard();
    let w = init_container(&ModelConfig::reference(), &g, 21).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("w.neow");
    w.save(&p).unwrap();
    let back = WeightContainer::load(&p).unwrap();
    assert_eq!(back, w);
    let x = gaussian(12, 384, 22, 1.0);
    let a = CnnGat::from_container(&w, &g).unwrap().forward_matrix(x.view()).unwrap().probability;
    let b = CnnGat::from_container(&back, &g).unwrap().forward_matrix(x.view()).unwrap().probability;
    assert_eq!(a.to_bits(), b.to_bits());
}

#[test]
fn other_montage_is_rejected() {
    let g = MontageGraph::standard();
    let w = init_container(&ModelConfig::reference(), &g, 0).unwrap();
    let mut pairs: Vec<(String, String)> = g.channels().to_vec();
    pairs.swap(0, 5);
    let other = MontageGraph::new(g.electrodes().clone(), pairs).unwrap();
    if other.adjacency() != g.adjacency() {
        assert!(CnnGat::from_container(&w, &other).is_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn relevance_is_normalized(seed in 0u64..1000, scale in 0.1f64..5.0) {
        let m = model(seed % 7);
        let e = Epoch::new(gaussian(12, 384, seed, scale), 0).unwrap();
        let (out, rel) = grad_cam(&m, &e).unwrap();
        prop_assert!(out.probability > 0.0 && out.probability < 1.0);
        for s in [&rel.channel_scores, &rel.temporal_scores] {
            prop_assert!(s.iter().all(|&v| (0.0..=1.0).contains(&v)));
            if s.iter().any(|&v| v > 0.0) {
                prop_assert_eq!(s.iter().copied().fold(0.0, f64::max), 1.0);
            }
        }
    }
}
