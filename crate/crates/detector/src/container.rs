//! Single-file named tensor store.
//!
//! ```text
//! magic "NEOWGT01" | u64 LE manifest length | JSON manifest | pad to 8 | blob
//! ```
//!
//! Tensor offsets are relative to the blob start and 8-byte aligned; data is
//! little-endian f32, row-major. The manifest carries a CRC-32 of the blob.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::error::{DetectorError, Result};

pub const MAGIC: &[u8; 8] = b"NEOWGT01";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub tensors: Vec<TensorEntry>,
    pub model_config: Option<ModelConfig>,
    pub adjacency_sha256: Option<String>,
    pub zscore: bool,
    pub metadata: BTreeMap<String, String>,
    pub blob_len: u64,
    pub blob_crc32: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(DetectorError::Container(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightContainer {
    pub model_config: Option<ModelConfig>,
    pub adjacency_sha256: Option<String>,
    pub zscore: bool,
    pub metadata: BTreeMap<String, String>,
    tensors: BTreeMap<String, Tensor>,
}

fn align8(n: usize) -> usize {
    n.div_ceil(8) * 8
}

impl WeightContainer {
    pub fn new() -> Self {
        Self { zscore: true, ..Self::default() }
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor) {
        self.tensors.insert(name.to_string(), tensor);
    }

    pub fn insert_f64(&mut self, name: &str, shape: Vec<usize>, data: &[f64]) -> Result<()> {
        let t = Tensor::new(shape, data.iter().map(|&v| v as f32).collect())?;
        self.insert(name, t);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    /// The tensor, checked against an expected shape.
    pub fn expect(&self, name: &str, shape: &[usize]) -> Result<&Tensor> {
        let t = self.get(name).ok_or_else(|| DetectorError::Tensor { name: name.into(), msg: "missing".into() })?;
        if t.shape != shape {
            return Err(DetectorError::Tensor {
                name: name.into(),
                msg: format!("shape {:?}, expected {shape:?}", t.shape),
            });
        }
        Ok(t)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut blob = Vec::new();
        let mut entries = Vec::with_capacity(self.tensors.len());
        for (name, t) in &self.tensors {
            blob.resize(align8(blob.len()), 0);
            entries.push(TensorEntry {
                name: name.clone(),
                shape: t.shape.clone(),
                dtype: "f32".into(),
                offset: blob.len() as u64,
            });
            for v in &t.data {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            tensors: entries,
            model_config: self.model_config.clone(),
            adjacency_sha256: self.adjacency_sha256.clone(),
            zscore: self.zscore,
            metadata: self.metadata.clone(),
            blob_len: blob.len() as u64,
            blob_crc32: crc32fast::hash(&blob),
        };
        let json = serde_json::to_vec(&manifest).map_err(|e| DetectorError::Container(e.to_string()))?;
        let mut out = Vec::with_capacity(16 + json.len() + 8 + blob.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.resize(align8(out.len()), b' ');
        out.extend_from_slice(&blob);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let err = |m: &str| DetectorError::Container(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(err("bad magic"));
        }
        let mlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let mend = 16usize.checked_add(mlen).filter(|&e| e <= bytes.len()).ok_or_else(|| err("truncated manifest"))?;
        let manifest: Manifest =
            serde_json::from_slice(&bytes[16..mend]).map_err(|e| DetectorError::Container(format!("manifest: {e}")))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(err("unsupported format version"));
        }
        let bstart = align8(mend);
        let blob = bytes
            .get(bstart..bstart + manifest.blob_len as usize)
            .ok_or_else(|| err("truncated blob"))?;
        if crc32fast::hash(blob) != manifest.blob_crc32 {
            return Err(err("blob checksum mismatch"));
        }
        let mut tensors = BTreeMap::new();
        for e in &manifest.tensors {
            if e.dtype != "f32" {
                return Err(DetectorError::Tensor { name: e.name.clone(), msg: format!("unsupported dtype {}", e.dtype) });
            }
            if e.offset % 8 != 0 {
                return Err(DetectorError::Tensor { name: e.name.clone(), msg: "misaligned offset".into() });
            }
            let n: usize = e.shape.iter().product();
            let start = e.offset as usize;
            let raw = blob
                .get(start..start + 4 * n)
                .ok_or_else(|| DetectorError::Tensor { name: e.name.clone(), msg: "extends past the blob".into() })?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            tensors.insert(e.name.clone(), Tensor { shape: e.shape.clone(), data });
        }
        Ok(Self {
            model_config: manifest.model_config,
            adjacency_sha256: manifest.adjacency_sha256,
            zscore: manifest.zscore,
            metadata: manifest.metadata,
            tensors,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
