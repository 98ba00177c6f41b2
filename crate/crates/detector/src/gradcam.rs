//! Gradient-weighted relevance for the CNN-GAT detector.
//!
//! Channel scores weight the final attention output by the node-averaged
//! logit gradient. Temporal scores weight the last CNN block's feature maps
//! by the gradient that reaches them through all attention layers, then
//! upsample the reduced time axis back to the epoch length.

use ndarray::Array2;

use neoscan_core::Epoch;

use crate::error::{DetectorError, Result};
use crate::model::{CnnGat, EncoderActivations, ForwardOutput};

#[derive(Debug, Clone, PartialEq)]
pub struct Relevance {
    /// One non-negative score per node, max 1 when any is positive.
    pub channel_scores: Vec<f64>,
    /// One non-negative score per input sample.
    pub temporal_scores: Vec<f64>,
}

impl Relevance {
    /// Node indices by descending channel score.
    pub fn top_channels(&self, k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.channel_scores.len()).collect();
        idx.sort_by(|&a, &b| self.channel_scores[b].total_cmp(&self.channel_scores[a]).then(a.cmp(&b)));
        idx.truncate(k);
        idx
    }
}

fn normalize_max(v: &mut [f64]) {
    let m = v.iter().copied().fold(0.0, f64::max);
    if m > 0.0 {
        v.iter_mut().for_each(|x| *x /= m);
    }
}

/// Linear interpolation of cell-centred values onto `n` samples.
pub fn upsample_linear(x: &[f64], n: usize) -> Vec<f64> {
    if x.is_empty() {
        return vec![0.0; n];
    }
    let m = x.len();
    (0..n)
        .map(|s| {
            let pos = ((s as f64 + 0.5) * m as f64 / n as f64 - 0.5).clamp(0.0, (m - 1) as f64);
            let i = pos.floor() as usize;
            let j = (i + 1).min(m - 1);
            let w = pos - i as f64;
            x[i] * (1.0 - w) + x[j] * w
        })
        .collect()
}

/// Relevance from a completed forward pass.
pub fn relevance(model: &CnnGat, acts: &EncoderActivations) -> Result<Relevance> {
    if acts.gat.len() != model.gat_layers().len() {
        return Err(DetectorError::Input("activations do not come from this model".into()));
    }
    let grad = model.logit_grad_final_gat(acts);
    let h = acts.final_gat();
    let n = h.nrows();
    let alpha: Vec<f64> = grad.columns().into_iter().map(|c| c.sum() / n as f64).collect();
    let mut channel_scores: Vec<f64> = h
        .rows()
        .into_iter()
        .map(|r| r.iter().zip(&alpha).map(|(v, a)| v * a).sum::<f64>().max(0.0))
        .collect();
    normalize_max(&mut channel_scores);

    let a = acts.cnn_output();
    let (_, c, t) = a.dim();
    let g = model.logit_grad_node_features(acts);
    let mut cam = vec![0.0; t];
    for node in 0..n {
        let gn = Array2::from_shape_vec((c, t), g.row(node).to_vec()).expect("node feature layout");
        let w: Vec<f64> = gn.rows().into_iter().map(|r| r.sum() / t as f64).collect();
        for (ti, slot) in cam.iter_mut().enumerate() {
            let v: f64 = (0..c).map(|ci| w[ci] * a[[node, ci, ti]]).sum();
            *slot += v.max(0.0) / n as f64;
        }
    }
    let mut temporal_scores = upsample_linear(&cam, model.config().input_samples);
    normalize_max(&mut temporal_scores);
    Ok(Relevance { channel_scores, temporal_scores })
}

/// Forward pass plus relevance.
pub fn grad_cam(model: &CnnGat, epoch: &Epoch) -> Result<(ForwardOutput, Relevance)> {
    let out = model.forward(epoch)?;
    let rel = relevance(model, &out.activations)?;
    Ok((out, rel))
}
