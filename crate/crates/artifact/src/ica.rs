//! Extended-infomax ICA.
//!
//! Data are centred and sphered with the symmetric inverse square root of
//! the covariance, then the unmixing matrix follows the natural-gradient
//! rule `dW = lr * (b I - K tanh(U) U^T - U U^T) W` over shuffled blocks of
//! `b` samples, where `K` holds +1 for super- and -1 for sub-Gaussian
//! components. Signs are re-estimated after every pass from a smoothed
//! kurtosis estimate; the learning rate decays when successive weight
//! changes turn by more than the annealing angle.

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{ArtifactError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct IcaConfig {
    /// Defaults to `0.01 / ln(n^2)` when `None`.
    pub learning_rate: Option<f64>,
    pub max_iter: usize,
    /// Stop once the squared Frobenius norm of a pass's weight change drops
    /// below this.
    pub tol: f64,
    /// Defaults to `floor(sqrt(n_samples / 3))` when `None`.
    pub block_size: Option<usize>,
    pub anneal_deg: f64,
    pub anneal_step: f64,
    pub kurtosis_momentum: f64,
    /// Replace the final unmixing by its nearest orthogonal matrix so the
    /// fitted activations are exactly uncorrelated.
    pub orthogonalize: bool,
    pub seed: u64,
}

impl Default for IcaConfig {
    fn default() -> Self {
        Self {
            learning_rate: None,
            max_iter: 500,
            tol: 1e-10,
            block_size: None,
            anneal_deg: 60.0,
            anneal_step: 0.9,
            kurtosis_momentum: 0.5,
            orthogonalize: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    SuperGaussian,
    SubGaussian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcaReport {
    pub converged: bool,
    pub iterations: usize,
    pub final_change: f64,
    pub final_learning_rate: f64,
    pub restarts: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcaModel {
    /// Unmixing in the sphered domain.
    pub unmixing: Array2<f64>,
    /// Inverse of [`IcaModel::unmixing`].
    pub mixing: Array2<f64>,
    pub whitener: Array2<f64>,
    pub dewhitener: Array2<f64>,
    pub means: Vec<f64>,
    pub kinds: Vec<SourceKind>,
    pub report: IcaReport,
}

/// Minimum samples per fit: 20 per unmixing coefficient.
pub fn min_samples(n_channels: usize) -> usize {
    20 * n_channels * n_channels
}

fn to_na(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

fn excess_kurtosis(x: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = x.clone().count() as f64;
    let mean = x.clone().sum::<f64>() / n;
    let (m2, m4) = x.fold((0.0, 0.0), |(a, b), v| {
        let d = (v - mean) * (v - mean);
        (a + d, b + d * d)
    });
    let (m2, m4) = (m2 / n, m4 / n);
    if m2 > 0.0 {
        m4 / (m2 * m2) - 3.0
    } else {
        0.0
    }
}

pub fn fit_ica(x: ArrayView2<f64>, cfg: &IcaConfig) -> Result<IcaModel> {
    let (n, n_samp) = x.dim();
    if n == 0 {
        return Err(ArtifactError::Input("no channels".into()));
    }
    if n_samp < min_samples(n) {
        return Err(ArtifactError::Input(format!(
            "{n_samp} samples is below the {} needed for {n} channels",
            min_samples(n)
        )));
    }
    if let Some(((c, i), _)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(neoscan_core::Error::NonFinite { channel: c, index: i }.into());
    }
    let means: Vec<f64> = x.rows().into_iter().map(|r| r.sum() / n_samp as f64).collect();
    let centred = Array2::from_shape_fn((n, n_samp), |(c, t)| x[[c, t]] - means[c]);
    let cov = centred.dot(&centred.t()) / n_samp as f64;
    let eig = to_na(&cov).symmetric_eigen();
    let max_eig = eig.eigenvalues.max();
    let min_eig = eig.eigenvalues.min();
    if !(max_eig > 0.0) || min_eig <= max_eig * 1e-10 {
        let channel = (0..n).min_by(|&a, &b| cov[[a, a]].total_cmp(&cov[[b, b]])).unwrap();
        return Err(ArtifactError::RankDeficient { channel, min_eig });
    }
    let v = &eig.eigenvectors;
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    let sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    let whitener = from_na(&(v * inv_sqrt * v.transpose()));
    let dewhitener = from_na(&(v * sqrt * v.transpose()));
    let z = whitener.dot(&centred);
    // sample-major copy so each sample is contiguous
    let zt: Vec<f64> = z.t().iter().copied().collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let lr0 = cfg.learning_rate.unwrap_or(0.01 / ((n * n) as f64).ln().max(1.0));
    let block = cfg.block_size.unwrap_or(((n_samp as f64 / 3.0).sqrt()) as usize).clamp(1, n_samp);
    let init = {
        let d = Normal::new(0.0, 0.05).expect("valid sd");
        let mut w = Array2::<f64>::eye(n);
        w.mapv_inplace(|v| v + d.sample(&mut rng));
        w
    };

    let mut w = init.clone();
    let mut lr = lr0;
    let mut signs = vec![1.0; n];
    let mut kurt = vec![0.0; n];
    let mut order: Vec<usize> = (0..n_samp).collect();
    let mut last_delta: Option<Array2<f64>> = None;
    let mut restarts = 0;
    let mut report = IcaReport { converged: false, iterations: 0, final_change: f64::INFINITY, final_learning_rate: lr, restarts: 0 };
    let mut u = vec![0.0; n * block];
    let mut y = vec![0.0; n * block];
    let mut step = 0;
    while step < cfg.max_iter {
        step += 1;
        let w_old = w.clone();
        order.shuffle(&mut rng);
        let mut blew_up = false;
        for chunk in order.chunks(block) {
            let b = chunk.len();
            for (k, &t) in chunk.iter().enumerate() {
                let s = &zt[t * n..][..n];
                for i in 0..n {
                    let v: f64 = (0..n).map(|j| w[[i, j]] * s[j]).sum();
                    u[i * block + k] = v;
                    y[i * block + k] = v.tanh();
                }
            }
            let mut g = Array2::<f64>::zeros((n, n));
            for i in 0..n {
                let (ui, yi) = (&u[i * block..][..b], &y[i * block..][..b]);
                for j in 0..n {
                    let uj = &u[j * block..][..b];
                    let (mut yu, mut uu) = (0.0, 0.0);
                    for k in 0..b {
                        yu += yi[k] * uj[k];
                        uu += ui[k] * uj[k];
                    }
                    g[[i, j]] = -signs[i] * yu - uu + if i == j { b as f64 } else { 0.0 };
                }
            }
            w = &w + &(g.dot(&w) * lr);
            if w.iter().any(|v| !v.is_finite() || v.abs() > 1e8) {
                blew_up = true;
                break;
            }
        }
        if blew_up {
            restarts += 1;
            lr *= 0.8;
            w = init.clone();
            last_delta = None;
            step = 0;
            if restarts > 20 {
                break;
            }
            continue;
        }
        let s = w.dot(&z);
        for (i, row) in s.rows().into_iter().enumerate() {
            let k = excess_kurtosis(row.iter().copied());
            kurt[i] = if step == 1 { k } else { cfg.kurtosis_momentum * kurt[i] + (1.0 - cfg.kurtosis_momentum) * k };
            signs[i] = if kurt[i] < 0.0 { -1.0 } else { 1.0 };
        }
        let delta = &w - &w_old;
        let change: f64 = delta.iter().map(|v| v * v).sum();
        if let Some(prev) = &last_delta {
            let pc: f64 = prev.iter().map(|v| v * v).sum();
            let cos = (&delta * prev).sum() / (change * pc).sqrt().max(f64::MIN_POSITIVE);
            if cos.clamp(-1.0, 1.0).acos().to_degrees() > cfg.anneal_deg {
                lr *= cfg.anneal_step;
            }
        }
        last_delta = Some(delta);
        report = IcaReport { converged: change < cfg.tol, iterations: step, final_change: change, final_learning_rate: lr, restarts };
        if report.converged {
            break;
        }
    }
    if !report.converged {
        log::warn!("ICA stopped after {} passes without converging (change {:.3e})", report.iterations, report.final_change);
    }
    if cfg.orthogonalize {
        // (W W^T)^(-1/2) W
        let wn = to_na(&w);
        let e = (&wn * wn.transpose()).symmetric_eigen();
        let isq = DMatrix::from_diagonal(&e.eigenvalues.map(|l| 1.0 / l.max(f64::MIN_POSITIVE).sqrt()));
        w = from_na(&(&e.eigenvectors * isq * e.eigenvectors.transpose() * wn));
    }
    let mixing = to_na(&w)
        .try_inverse()
        .map(|m| from_na(&m))
        .ok_or_else(|| ArtifactError::Input("unmixing matrix became singular".into()))?;
    let kinds = signs.iter().map(|&s| if s > 0.0 { SourceKind::SuperGaussian } else { SourceKind::SubGaussian }).collect();
    Ok(IcaModel { unmixing: w, mixing, whitener, dewhitener, means, kinds, report })
}

impl IcaModel {
    pub fn n_components(&self) -> usize {
        self.unmixing.nrows()
    }

    /// Channel-space unmixing, `W * whitener`.
    pub fn full_unmixing(&self) -> Array2<f64> {
        self.unmixing.dot(&self.whitener)
    }

    /// Channel-space mixing; column `k` is component `k`'s scalp pattern.
    pub fn channel_mixing(&self) -> Array2<f64> {
        self.dewhitener.dot(&self.mixing)
    }

    fn check(&self, rows: usize) -> Result<()> {
        if rows != self.n_components() {
            return Err(ArtifactError::Input(format!("expected {} rows, got {rows}", self.n_components())));
        }
        Ok(())
    }

    pub fn transform(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(x.nrows())?;
        let centred = Array2::from_shape_fn(x.dim(), |(c, t)| x[[c, t]] - self.means[c]);
        Ok(self.full_unmixing().dot(&centred))
    }

    pub fn inverse_transform(&self, s: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(s.nrows())?;
        let mut x = self.channel_mixing().dot(&s);
        for (c, mut row) in x.rows_mut().into_iter().enumerate() {
            row += self.means[c];
        }
        Ok(x)
    }
}

/// Normalized Amari index of `p` (0 for a scaled permutation, at most 1).
pub fn amari_index(p: ArrayView2<f64>) -> f64 {
    let n = p.nrows();
    if n < 2 {
        return 0.0;
    }
    let a = p.mapv(f64::abs);
    let rows: f64 = a
        .rows()
        .into_iter()
        .map(|r| r.sum() / r.iter().copied().fold(0.0, f64::max) - 1.0)
        .sum();
    let cols: f64 = a
        .columns()
        .into_iter()
        .map(|c| c.sum() / c.iter().copied().fold(0.0, f64::max) - 1.0)
        .sum();
    (rows + cols) / (2.0 * n as f64 * (n as f64 - 1.0))
}
