//! CNN-GAT inference.
//!
//! Every bipolar channel row runs through the same 1-D CNN encoder; the
//! flattened encoder output (`f = c * T + t`) becomes that node's feature
//! vector for three graph attention layers. Node features are averaged and
//! passed through the dense head to a single logit.
//!
//! Weights are stored as f32; all arithmetic is f64.

use ndarray::{Array2, Array3, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use sha2::{Digest, Sha256};

use neoscan_core::montage::MontageGraph;
use neoscan_core::Epoch;

use crate::config::ModelConfig;
use crate::container::{Tensor, WeightContainer};
use crate::error::{DetectorError, Result};

pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

pub fn elu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Adjacency with self-loops forced on, as used by the attention layers.
pub fn with_self_loops(adj: &[Vec<bool>]) -> Vec<Vec<bool>> {
    let mut a = adj.to_vec();
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = true;
    }
    a
}

/// SHA-256 of the self-looped adjacency, one `0`/`1` row per line.
pub fn adjacency_hash(adj: &[Vec<bool>]) -> String {
    let mut h = Sha256::new();
    for row in with_self_loops(adj) {
        let line: String = row.iter().map(|&b| if b { '1' } else { '0' }).collect();
        h.update(line.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

/// Same-padded 1-D convolution, weights `[out][in][k]`.
#[derive(Debug, Clone)]
struct Conv1d {
    c_out: usize,
    c_in: usize,
    k: usize,
    w: Vec<f64>,
    b: Vec<f64>,
}

impl Conv1d {
    fn load(w: &WeightContainer, prefix: &str, c_out: usize, c_in: usize, k: usize) -> Result<Self> {
        Ok(Self {
            c_out,
            c_in,
            k,
            w: w.expect(&format!("{prefix}.weight"), &[c_out, c_in, k])?.to_f64(),
            b: w.expect(&format!("{prefix}.bias"), &[c_out])?.to_f64(),
        })
    }

    fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let t_len = x.ncols();
        let x = x.as_standard_layout();
        let xs = x.as_slice().expect("standard layout");
        let half = self.k / 2;
        let mut y = Array2::zeros((self.c_out, t_len));
        let ys = y.as_slice_mut().expect("fresh array");
        for o in 0..self.c_out {
            let yrow = &mut ys[o * t_len..][..t_len];
            yrow.fill(self.b[o]);
            for i in 0..self.c_in {
                let xrow = &xs[i * t_len..][..t_len];
                let wrow = &self.w[(o * self.c_in + i) * self.k..][..self.k];
                for (kk, &wv) in wrow.iter().enumerate() {
                    // y[t] += w * x[t + kk - half] where the index is valid
                    let (t0, s0) = if kk < half { (half - kk, 0) } else { (0, kk - half) };
                    let n = t_len.saturating_sub(t0.max(s0));
                    for (yv, xv) in yrow[t0..t0 + n].iter_mut().zip(&xrow[s0..s0 + n]) {
                        *yv += wv * xv;
                    }
                }
            }
        }
        y
    }
}

/// Inference batch norm folded to `scale * x + shift`.
#[derive(Debug, Clone)]
struct BatchNorm {
    scale: Vec<f64>,
    shift: Vec<f64>,
}

impl BatchNorm {
    fn load(w: &WeightContainer, prefix: &str, c: usize, eps: f64) -> Result<Self> {
        let g = w.expect(&format!("{prefix}.weight"), &[c])?.to_f64();
        let b = w.expect(&format!("{prefix}.bias"), &[c])?.to_f64();
        let m = w.expect(&format!("{prefix}.running_mean"), &[c])?.to_f64();
        let v = w.expect(&format!("{prefix}.running_var"), &[c])?.to_f64();
        if let Some(bad) = v.iter().position(|&x| x < 0.0) {
            return Err(DetectorError::Tensor {
                name: format!("{prefix}.running_var"),
                msg: format!("negative variance at {bad}"),
            });
        }
        let scale: Vec<f64> = g.iter().zip(&v).map(|(g, v)| g / (v + eps).sqrt()).collect();
        let shift = b.iter().zip(&m).zip(&scale).map(|((b, m), s)| b - m * s).collect();
        Ok(Self { scale, shift })
    }

    fn apply(&self, x: &mut Array2<f64>) {
        for (c, mut row) in x.rows_mut().into_iter().enumerate() {
            row.mapv_inplace(|v| v * self.scale[c] + self.shift[c]);
        }
    }
}

fn avg_pool(x: &Array2<f64>, p: usize) -> Array2<f64> {
    let t_out = x.ncols() / p;
    Array2::from_shape_fn((x.nrows(), t_out), |(c, t)| {
        (0..p).map(|j| x[[c, t * p + j]]).sum::<f64>() / p as f64
    })
}

#[derive(Debug, Clone)]
struct ResBlock {
    conv1: Conv1d,
    bn1: BatchNorm,
    conv2: Conv1d,
    bn2: BatchNorm,
    proj: Option<Conv1d>,
    pool: usize,
}

impl ResBlock {
    fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut h = self.conv1.apply(x);
        self.bn1.apply(&mut h);
        h.mapv_inplace(|v| v.max(0.0));
        let mut h = self.conv2.apply(h.view());
        self.bn2.apply(&mut h);
        match &self.proj {
            Some(p) => h += &p.apply(x),
            None => h += &x,
        }
        h.mapv_inplace(|v| v.max(0.0));
        avg_pool(&h, self.pool)
    }
}

/// One graph attention layer.
#[derive(Debug, Clone)]
pub struct GatLayer {
    pub f_in: usize,
    pub f_out: usize,
    /// Row-major `[f_in][f_out]`.
    pub weight: Vec<f64>,
    pub att_src: Vec<f64>,
    pub att_dst: Vec<f64>,
    pub bias: Vec<f64>,
    pub slope: f64,
}

/// Intermediate values of one attention layer, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct GatCache {
    pub input: Array2<f64>,
    /// `X W`.
    pub z: Array2<f64>,
    /// Pre-LeakyReLU attention logits; NaN off the neighborhood.
    pub scores: Array2<f64>,
    /// Row-stochastic attention over each neighborhood.
    pub attention: Array2<f64>,
    /// Aggregated features before ELU.
    pub pre_activation: Array2<f64>,
    pub output: Array2<f64>,
}

impl GatLayer {
    fn load(w: &WeightContainer, prefix: &str, f_in: usize, f_out: usize, slope: f64) -> Result<Self> {
        Ok(Self {
            f_in,
            f_out,
            weight: w.expect(&format!("{prefix}.weight"), &[f_in, f_out])?.to_f64(),
            att_src: w.expect(&format!("{prefix}.att_src"), &[f_out])?.to_f64(),
            att_dst: w.expect(&format!("{prefix}.att_dst"), &[f_out])?.to_f64(),
            bias: w.expect(&format!("{prefix}.bias"), &[f_out])?.to_f64(),
            slope,
        })
    }

    /// `adjacency` must already contain self-loops.
    pub fn forward(&self, x: ArrayView2<f64>, adjacency: &[Vec<bool>]) -> Result<GatCache> {
        let n = x.nrows();
        if x.ncols() != self.f_in || adjacency.len() != n || adjacency.iter().any(|r| r.len() != n) {
            return Err(DetectorError::Input(format!(
                "attention layer expects {n}x{} features and an {n}x{n} adjacency",
                self.f_in
            )));
        }
        let w = ArrayView2::from_shape((self.f_in, self.f_out), &self.weight).expect("validated at load");
        let z = x.dot(&w);
        let s_src: Vec<f64> = z.rows().into_iter().map(|r| dot(r.as_slice().unwrap(), &self.att_src)).collect();
        let s_dst: Vec<f64> = z.rows().into_iter().map(|r| dot(r.as_slice().unwrap(), &self.att_dst)).collect();
        let mut scores = Array2::from_elem((n, n), f64::NAN);
        let mut attention = Array2::zeros((n, n));
        for i in 0..n {
            let mut max = f64::NEG_INFINITY;
            for j in 0..n {
                if adjacency[i][j] {
                    let u = s_dst[i] + s_src[j];
                    scores[[i, j]] = u;
                    max = max.max(self.leaky(u));
                }
            }
            let mut sum = 0.0;
            for j in (0..n).filter(|&j| adjacency[i][j]) {
                let e = (self.leaky(scores[[i, j]]) - max).exp();
                attention[[i, j]] = e;
                sum += e;
            }
            attention.row_mut(i).mapv_inplace(|v| v / sum);
        }
        let mut pre = attention.dot(&z);
        for mut row in pre.rows_mut() {
            row.iter_mut().zip(&self.bias).for_each(|(v, b)| *v += b);
        }
        let output = pre.mapv(elu);
        Ok(GatCache { input: x.to_owned(), z, scores, attention, pre_activation: pre, output })
    }

    fn leaky(&self, u: f64) -> f64 {
        if u > 0.0 {
            u
        } else {
            self.slope * u
        }
    }

    fn leaky_grad(&self, u: f64) -> f64 {
        if u > 0.0 {
            1.0
        } else {
            self.slope
        }
    }

    /// Gradient with respect to the layer input given the gradient at its
    /// output.
    pub fn backward(&self, cache: &GatCache, d_out: ArrayView2<f64>) -> Array2<f64> {
        let n = cache.z.nrows();
        let d_pre = &d_out * &cache.pre_activation.mapv(elu_grad);
        let mut d_z = cache.attention.t().dot(&d_pre);
        let mut d_src = vec![0.0; n];
        let mut d_dst = vec![0.0; n];
        for i in 0..n {
            let d_alpha: Vec<f64> = (0..n).map(|j| dot_rows(&d_pre, i, &cache.z, j)).collect();
            let mean: f64 = (0..n).map(|k| cache.attention[[i, k]] * d_alpha[k]).sum();
            for j in 0..n {
                if cache.scores[[i, j]].is_nan() {
                    continue;
                }
                let a = cache.attention[[i, j]];
                let du = a * (d_alpha[j] - mean) * self.leaky_grad(cache.scores[[i, j]]);
                d_dst[i] += du;
                d_src[j] += du;
            }
        }
        for i in 0..n {
            for f in 0..self.f_out {
                d_z[[i, f]] += d_dst[i] * self.att_dst[f] + d_src[i] * self.att_src[f];
            }
        }
        let w = ArrayView2::from_shape((self.f_in, self.f_out), &self.weight).expect("validated at load");
        d_z.dot(&w.t())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dot_rows(a: &Array2<f64>, i: usize, b: &Array2<f64>, j: usize) -> f64 {
    a.row(i).iter().zip(b.row(j)).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone)]
struct Dense {
    d_out: usize,
    d_in: usize,
    w: Vec<f64>,
    b: Vec<f64>,
}

impl Dense {
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.d_out).map(|o| self.b[o] + dot(&self.w[o * self.d_in..][..self.d_in], x)).collect()
    }
}

/// Everything the relevance computation needs from one forward pass.
#[derive(Debug, Clone)]
pub struct EncoderActivations {
    /// Per CNN block output, `[node][channel][time]`.
    pub blocks: Vec<Array3<f64>>,
    /// Flattened CNN output per node, the first attention input.
    pub node_features: Array2<f64>,
    pub gat: Vec<GatCache>,
    pub pooled: Vec<f64>,
    /// Dense pre-activations, the last one being the logit.
    pub dense_pre: Vec<Vec<f64>>,
}

impl EncoderActivations {
    /// Final attention layer output, `nodes x features`.
    pub fn final_gat(&self) -> &Array2<f64> {
        &self.gat.last().expect("at least one attention layer").output
    }

    pub fn cnn_output(&self) -> &Array3<f64> {
        self.blocks.last().expect("stem block always present")
    }
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub probability: f64,
    pub logit: f64,
    pub activations: EncoderActivations,
}

#[derive(Debug, Clone)]
pub struct CnnGat {
    cfg: ModelConfig,
    adjacency: Vec<Vec<bool>>,
    zscore: bool,
    stem_a: Conv1d,
    stem_b: Conv1d,
    stem_bn: BatchNorm,
    blocks: Vec<ResBlock>,
    gat: Vec<GatLayer>,
    dense: Vec<Dense>,
}

impl CnnGat {
    /// Loads a model, checking every tensor shape and the adjacency hash
    /// against `montage`.
    pub fn from_container(w: &WeightContainer, montage: &MontageGraph) -> Result<Self> {
        let cfg = w
            .model_config
            .clone()
            .ok_or_else(|| DetectorError::Container("manifest has no model_config".into()))?;
        cfg.validate()?;
        if montage.n_channels() != cfg.n_nodes {
            return Err(DetectorError::Adjacency(format!(
                "montage has {} channels, model expects {}",
                montage.n_channels(),
                cfg.n_nodes
            )));
        }
        let expected = adjacency_hash(montage.adjacency());
        match &w.adjacency_sha256 {
            Some(h) if *h == expected => {}
            Some(h) => {
                return Err(DetectorError::Adjacency(format!("container hash {h}, montage hash {expected}")));
            }
            None => return Err(DetectorError::Adjacency("container carries no adjacency hash".into())),
        }
        let s = cfg.stem_channels;
        let stem_a = Conv1d::load(w, "block1.conv_a", s, 1, cfg.stem_kernels[0])?;
        let stem_b = Conv1d::load(w, "block1.conv_b", s, 1, cfg.stem_kernels[1])?;
        let stem_bn = BatchNorm::load(w, "block1.bn", s, cfg.bn_eps)?;
        let mut blocks = Vec::new();
        for (i, b) in cfg.res_blocks.iter().enumerate() {
            let p = format!("block{}", i + 2);
            let (ci, co, k) = (b.in_channels, b.out_channels, b.kernel);
            blocks.push(ResBlock {
                conv1: Conv1d::load(w, &format!("{p}.conv1"), co, ci, k)?,
                bn1: BatchNorm::load(w, &format!("{p}.bn1"), co, cfg.bn_eps)?,
                conv2: Conv1d::load(w, &format!("{p}.conv2"), co, co, k)?,
                bn2: BatchNorm::load(w, &format!("{p}.bn2"), co, cfg.bn_eps)?,
                proj: if ci != co { Some(Conv1d::load(w, &format!("{p}.proj"), co, ci, 1)?) } else { None },
                pool: b.pool,
            });
        }
        let mut f_in = cfg.node_features();
        let mut gat = Vec::new();
        for (i, &f_out) in cfg.gat_dims.iter().enumerate() {
            gat.push(GatLayer::load(w, &format!("gat{}", i + 1), f_in, f_out, cfg.leaky_slope)?);
            f_in = f_out;
        }
        let mut dense = Vec::new();
        for (i, &d_out) in cfg.dense_dims.iter().chain(std::iter::once(&1)).enumerate() {
            let p = format!("dense{}", i + 1);
            dense.push(Dense {
                d_out,
                d_in: f_in,
                w: w.expect(&format!("{p}.weight"), &[d_out, f_in])?.to_f64(),
                b: w.expect(&format!("{p}.bias"), &[d_out])?.to_f64(),
            });
            f_in = d_out;
        }
        Ok(Self {
            adjacency: with_self_loops(montage.adjacency()),
            zscore: w.zscore,
            cfg,
            stem_a,
            stem_b,
            stem_bn,
            blocks,
            gat,
            dense,
        })
    }

    /// Random weights for structural tests and plumbing.
    pub fn random(cfg: &ModelConfig, montage: &MontageGraph, seed: u64) -> Result<Self> {
        Self::from_container(&init_container(cfg, montage, seed)?, montage)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    /// Self-looped adjacency the attention layers use.
    pub fn adjacency(&self) -> &[Vec<bool>] {
        &self.adjacency
    }

    /// Whether inputs are expected to be z-scored per channel.
    pub fn zscore(&self) -> bool {
        self.zscore
    }

    pub fn gat_layers(&self) -> &[GatLayer] {
        &self.gat
    }

    /// CNN encoder on one channel row, returning each block's output.
    pub fn encode_row(&self, row: &[f64]) -> Vec<Array2<f64>> {
        let x = ArrayView2::from_shape((1, row.len()), row).expect("row view");
        let mut h = self.stem_a.apply(x);
        h += &self.stem_b.apply(x);
        let mut h = avg_pool(&h, self.cfg.stem_pool);
        self.stem_bn.apply(&mut h);
        let mut outs = vec![h];
        for b in &self.blocks {
            let next = b.apply(outs.last().unwrap().view());
            outs.push(next);
        }
        outs
    }

    pub fn forward(&self, epoch: &Epoch) -> Result<ForwardOutput> {
        self.forward_matrix(epoch.data())
    }

    /// Forward pass on a `nodes x samples` matrix.
    pub fn forward_matrix(&self, x: ArrayView2<f64>) -> Result<ForwardOutput> {
        self.forward_with_adjacency(x, &self.adjacency)
    }

    /// Forward pass with an explicit (self-looped) adjacency.
    pub fn forward_with_adjacency(&self, x: ArrayView2<f64>, adjacency: &[Vec<bool>]) -> Result<ForwardOutput> {
        let (n, t) = (self.cfg.n_nodes, self.cfg.input_samples);
        if x.dim() != (n, t) {
            return Err(DetectorError::Input(format!("expected {n}x{t} input, got {:?}", x.dim())));
        }
        let per_node: Vec<Vec<Array2<f64>>> = x.rows().into_iter().map(|r| self.encode_row(&r.to_vec())).collect();
        let n_blocks = per_node[0].len();
        let blocks: Vec<Array3<f64>> = (0..n_blocks)
            .map(|b| {
                let (c, tt) = per_node[0][b].dim();
                Array3::from_shape_fn((n, c, tt), |(i, ci, ti)| per_node[i][b][[ci, ti]])
            })
            .collect();
        let last = blocks.last().unwrap();
        let node_features = Array2::from_shape_vec((n, self.cfg.node_features()), last.iter().copied().collect())
            .expect("node feature layout");
        self.head(node_features, blocks, adjacency)
    }

    /// Attention layers and dense head from given node features.
    pub fn head(
        &self,
        node_features: Array2<f64>,
        blocks: Vec<Array3<f64>>,
        adjacency: &[Vec<bool>],
    ) -> Result<ForwardOutput> {
        let mut gat = Vec::with_capacity(self.gat.len());
        let mut h = node_features.clone();
        for layer in &self.gat {
            let c = layer.forward(h.view(), adjacency)?;
            h = c.output.clone();
            gat.push(c);
        }
        let (pooled, dense_pre) = self.dense_forward(&h);
        let logit = dense_pre.last().unwrap()[0];
        Ok(ForwardOutput {
            probability: sigmoid(logit),
            logit,
            activations: EncoderActivations { blocks, node_features, gat, pooled, dense_pre },
        })
    }

    fn dense_forward(&self, h: &Array2<f64>) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = h.nrows() as f64;
        let pooled: Vec<f64> = h.columns().into_iter().map(|c| c.sum() / n).collect();
        let mut pre = Vec::with_capacity(self.dense.len());
        let mut a = pooled.clone();
        for (k, d) in self.dense.iter().enumerate() {
            let z = d.apply(&a);
            a = if k + 1 < self.dense.len() { z.iter().map(|&v| elu(v)).collect() } else { z.clone() };
            pre.push(z);
        }
        (pooled, pre)
    }

    /// Logit as a function of the final attention output alone.
    pub fn logit_from_final_gat(&self, h: &Array2<f64>) -> f64 {
        self.dense_forward(h).1.last().unwrap()[0]
    }

    /// Exact gradient of the logit with respect to the final attention
    /// output, through the dense head and node averaging.
    pub fn logit_grad_final_gat(&self, acts: &EncoderActivations) -> Array2<f64> {
        let mut g = vec![1.0];
        for k in (0..self.dense.len()).rev() {
            let d = &self.dense[k];
            if k + 1 < self.dense.len() {
                for (gi, z) in g.iter_mut().zip(&acts.dense_pre[k]) {
                    *gi *= elu_grad(*z);
                }
            }
            let mut back = vec![0.0; d.d_in];
            for (o, go) in g.iter().enumerate() {
                for (i, b) in back.iter_mut().enumerate() {
                    *b += go * d.w[o * d.d_in + i];
                }
            }
            g = back;
        }
        let h = acts.final_gat();
        let n = h.nrows() as f64;
        Array2::from_shape_fn(h.dim(), |(_, f)| g[f] / n)
    }

    /// Gradient of the logit with respect to the first attention input
    /// (the flattened CNN output).
    pub fn logit_grad_node_features(&self, acts: &EncoderActivations) -> Array2<f64> {
        let mut g = self.logit_grad_final_gat(acts);
        for (layer, cache) in self.gat.iter().zip(&acts.gat).rev() {
            g = layer.backward(cache, g.view());
        }
        g
    }
}

/// Random initialization matching `cfg`, with non-trivial running statistics.
pub fn init_container(cfg: &ModelConfig, montage: &MontageGraph, seed: u64) -> Result<WeightContainer> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let var = Uniform::new(0.5, 1.5).expect("variance range");
    let mut w = WeightContainer::new();
    for spec in cfg.tensor_specs() {
        let n = spec.numel();
        let fan_in: usize = if spec.shape.len() >= 2 {
            if spec.name.starts_with("gat") {
                spec.shape[0]
            } else {
                spec.shape[1..].iter().product()
            }
        } else {
            1
        };
        let data: Vec<f32> = if spec.name.ends_with("running_var") {
            (0..n).map(|_| var.sample(&mut rng) as f32).collect()
        } else if spec.name.ends_with("running_mean") || (spec.name.contains(".bn") && spec.name.ends_with("bias")) {
            (0..n).map(|_| 0.1 * unit.sample(&mut rng) as f32).collect()
        } else if spec.name.contains(".bn") && spec.name.ends_with("weight") {
            (0..n).map(|_| (1.0 + 0.1 * unit.sample(&mut rng)) as f32).collect()
        } else if spec.name.ends_with("att_src") || spec.name.ends_with("att_dst") {
            let s = (1.0 / n as f64).sqrt();
            (0..n).map(|_| (s * unit.sample(&mut rng)) as f32).collect()
        } else if spec.shape.len() == 1 {
            (0..n).map(|_| 0.05 * unit.sample(&mut rng) as f32).collect()
        } else {
            let s = (2.0 / fan_in as f64).sqrt();
            (0..n).map(|_| (s * unit.sample(&mut rng)) as f32).collect()
        };
        w.insert(&spec.name, Tensor::new(spec.shape.clone(), data)?);
    }
    w.model_config = Some(cfg.clone());
    w.adjacency_sha256 = Some(adjacency_hash(montage.adjacency()));
    w.metadata.insert("init".into(), format!("random seed {seed}"));
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(seed: u64) -> CnnGat {
        CnnGat::random(&ModelConfig::reference(), &MontageGraph::standard(), seed).unwrap()
    }

    fn input(seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(0.0, 1.0).unwrap();
        Array2::from_shape_fn((12, 384), |_| d.sample(&mut rng))
    }

    #[test]
    fn probability_in_open_unit_interval_and_deterministic() {
        let m = model(1);
        let x = input(2);
        let a = m.forward_matrix(x.view()).unwrap();
        let b = m.forward_matrix(x.view()).unwrap();
        assert!(a.probability > 0.0 && a.probability < 1.0);
        assert_eq!(a.probability.to_bits(), b.probability.to_bits());
    }

    #[test]
    fn activation_shapes() {
        let m = model(3);
        let out = m.forward_matrix(input(4).view()).unwrap();
        let dims: Vec<_> = out.activations.blocks.iter().map(|b| b.dim()).collect();
        assert_eq!(dims, vec![(12, 8, 192), (12, 16, 96), (12, 16, 48), (12, 16, 12)]);
        assert_eq!(out.activations.final_gat().dim(), (12, 41));
        assert_eq!(out.activations.node_features.dim(), (12, 192));
    }

    #[test]
    fn wrong_shape_is_rejected() {
        let m = model(1);
        assert!(m.forward_matrix(Array2::zeros((12, 380)).view()).is_err());
    }

    #[test]
    fn attention_rows_are_stochastic_on_neighborhood() {
        let m = model(5);
        let out = m.forward_matrix(input(6).view()).unwrap();
        for c in &out.activations.gat {
            for (i, row) in c.attention.rows().into_iter().enumerate() {
                assert!((row.sum() - 1.0).abs() < 1e-12);
                for (j, &a) in row.iter().enumerate() {
                    assert_eq!(a > 0.0, m.adjacency()[i][j]);
                }
            }
        }
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn missing_tensor_is_named() {
        let g = MontageGraph::standard();
        let cfg = ModelConfig::reference();
        let full = init_container(&cfg, &g, 0).unwrap();
        let mut w = WeightContainer::new();
        w.model_config = full.model_config.clone();
        w.adjacency_sha256 = full.adjacency_sha256.clone();
        for name in full.names().filter(|n| *n != "gat2.att_src") {
            w.insert(name, full.get(name).unwrap().clone());
        }
        let e = CnnGat::from_container(&w, &g).unwrap_err().to_string();
        assert!(e.contains("gat2.att_src"), "{e}");
    }

    #[test]
    fn adjacency_hash_mismatch_is_rejected() {
        let g = MontageGraph::standard();
        let mut w = init_container(&ModelConfig::reference(), &g, 0).unwrap();
        w.adjacency_sha256 = Some("ab".into());
        assert!(matches!(CnnGat::from_container(&w, &g), Err(DetectorError::Adjacency(_))));
    }

    #[test]
    fn hash_is_stable_hex() {
        let h = adjacency_hash(MontageGraph::standard().adjacency());
        assert_eq!(h.len(), 64);
        assert!(h.chars().all(|c| c.is_ascii_hexdigit()));
    }
}
