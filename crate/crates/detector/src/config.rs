//! Architecture description of the CNN-GAT detector.

use serde::{Deserialize, Serialize};

use crate::error::{DetectorError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResBlockConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub pool: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub version: u32,
    pub n_nodes: usize,
    pub input_samples: usize,
    /// Width of the two parallel stem convolutions.
    pub stem_channels: usize,
    pub stem_kernels: [usize; 2],
    pub stem_pool: usize,
    pub res_blocks: Vec<ResBlockConfig>,
    /// Output width of each graph attention layer.
    pub gat_dims: Vec<usize>,
    /// Hidden dense widths; a single-logit output layer follows.
    pub dense_dims: Vec<usize>,
    pub leaky_slope: f64,
    pub bn_eps: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub learnable: bool,
}

impl TensorSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

impl ModelConfig {
    /// The shipped reference architecture: 46,612 learnable and 208
    /// non-learnable parameters.
    pub fn reference() -> Self {
        let rb = |i, o| ResBlockConfig { in_channels: i, out_channels: o, kernel: 5, pool: 2 };
        let mut res_blocks = vec![rb(8, 16), rb(16, 16), rb(16, 16)];
        res_blocks[2].pool = 4;
        Self {
            version: 1,
            n_nodes: 12,
            input_samples: 384,
            stem_channels: 8,
            stem_kernels: [5, 7],
            stem_pool: 2,
            res_blocks,
            gat_dims: vec![128, 70, 41],
            dense_dims: vec![32, 16],
            leaky_slope: 0.2,
            bn_eps: 1e-5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DetectorError::Config(m));
        if self.n_nodes == 0 || self.input_samples == 0 || self.stem_channels == 0 {
            return bad("node count, input length and stem width must be positive".into());
        }
        if self.stem_kernels.iter().any(|k| k % 2 == 0) {
            return bad("stem kernels must be odd".into());
        }
        let mut ch = self.stem_channels;
        for (i, b) in self.res_blocks.iter().enumerate() {
            if b.in_channels != ch {
                return bad(format!("residual block {i} expects {} channels, receives {ch}", b.in_channels));
            }
            if b.kernel % 2 == 0 || b.pool == 0 || b.out_channels == 0 {
                return bad(format!("residual block {i} needs an odd kernel and positive pool/width"));
            }
            ch = b.out_channels;
        }
        let total_pool: usize = self.stem_pool * self.res_blocks.iter().map(|b| b.pool).product::<usize>();
        if total_pool == 0 || self.input_samples % total_pool != 0 {
            return bad(format!("pooling factor {total_pool} does not divide {}", self.input_samples));
        }
        if self.gat_dims.is_empty() || self.gat_dims.contains(&0) || self.dense_dims.contains(&0) {
            return bad("graph and dense widths must be positive".into());
        }
        if !(self.bn_eps > 0.0 && self.leaky_slope >= 0.0) {
            return bad("bn_eps must be positive and leaky_slope non-negative".into());
        }
        Ok(())
    }

    pub fn cnn_channels(&self) -> usize {
        self.res_blocks.last().map_or(self.stem_channels, |b| b.out_channels)
    }

    /// Time steps left after all pooling stages.
    pub fn cnn_time(&self) -> usize {
        let p: usize = self.stem_pool * self.res_blocks.iter().map(|b| b.pool).product::<usize>();
        self.input_samples / p
    }

    /// Per-node feature length entering the first attention layer.
    pub fn node_features(&self) -> usize {
        self.cnn_channels() * self.cnn_time()
    }

    pub fn tensor_specs(&self) -> Vec<TensorSpec> {
        let mut out = Vec::new();
        let mut push = |name: String, shape: Vec<usize>, learnable: bool| out.push(TensorSpec { name, shape, learnable });
        let bn = |push: &mut dyn FnMut(String, Vec<usize>, bool), p: &str, c: usize| {
            push(format!("{p}.weight"), vec![c], true);
            push(format!("{p}.bias"), vec![c], true);
            push(format!("{p}.running_mean"), vec![c], false);
            push(format!("{p}.running_var"), vec![c], false);
        };
        let s = self.stem_channels;
        for (tag, k) in ["conv_a", "conv_b"].iter().zip(self.stem_kernels) {
            push(format!("block1.{tag}.weight"), vec![s, 1, k], true);
            push(format!("block1.{tag}.bias"), vec![s], true);
        }
        bn(&mut push, "block1.bn", s);
        for (i, b) in self.res_blocks.iter().enumerate() {
            let p = format!("block{}", i + 2);
            push(format!("{p}.conv1.weight"), vec![b.out_channels, b.in_channels, b.kernel], true);
            push(format!("{p}.conv1.bias"), vec![b.out_channels], true);
            bn(&mut push, &format!("{p}.bn1"), b.out_channels);
            push(format!("{p}.conv2.weight"), vec![b.out_channels, b.out_channels, b.kernel], true);
            push(format!("{p}.conv2.bias"), vec![b.out_channels], true);
            bn(&mut push, &format!("{p}.bn2"), b.out_channels);
            if b.in_channels != b.out_channels {
                push(format!("{p}.proj.weight"), vec![b.out_channels, b.in_channels, 1], true);
                push(format!("{p}.proj.bias"), vec![b.out_channels], true);
            }
        }
        let mut fin = self.node_features();
        for (i, &fout) in self.gat_dims.iter().enumerate() {
            let p = format!("gat{}", i + 1);
            push(format!("{p}.weight"), vec![fin, fout], true);
            push(format!("{p}.att_src"), vec![fout], true);
            push(format!("{p}.att_dst"), vec![fout], true);
            push(format!("{p}.bias"), vec![fout], true);
            fin = fout;
        }
        for (i, &dout) in self.dense_dims.iter().chain(std::iter::once(&1)).enumerate() {
            let p = format!("dense{}", i + 1);
            push(format!("{p}.weight"), vec![dout, fin], true);
            push(format!("{p}.bias"), vec![dout], true);
            fin = dout;
        }
        out
    }

    /// `(learnable, non_learnable)` parameter counts.
    pub fn param_counts(&self) -> (usize, usize) {
        self.tensor_specs().iter().fold((0, 0), |(l, n), t| {
            if t.learnable {
                (l + t.numel(), n)
            } else {
                (l, n + t.numel())
            }
        })
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::reference()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_geometry() {
        let c = ModelConfig::reference();
        c.validate().unwrap();
        assert_eq!(c.cnn_time(), 12);
        assert_eq!(c.node_features(), 192);
    }

    #[test]
    fn names_are_unique() {
        let specs = ModelConfig::reference().tensor_specs();
        let mut names: Vec<_> = specs.iter().map(|s| s.name.clone()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), specs.len());
    }

    #[test]
    fn chain_mismatch_is_rejected() {
        let mut c = ModelConfig::reference();
        c.res_blocks[1].in_channels = 8;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::reference();
        c.res_blocks[2].pool = 5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn json_rejects_unknown_fields() {
        let mut v = serde_json::to_value(ModelConfig::reference()).unwrap();
        v["extra"] = serde_json::json!(1);
        assert!(serde_json::from_value::<ModelConfig>(v).is_err());
    }
}
