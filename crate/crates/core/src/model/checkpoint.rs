//! Checkpoints: a JSON manifest next to a blob of little-endian `f64`s.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::net::KcrNet;
use crate::error::{KcrError, Result};
use crate::numerics::{Matrix, Rng};
use crate::selection::ChannelSelector;

pub const CHECKPOINT_SCHEMA: u32 = 1;
const DTYPE: &str = "f64-le";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectorMeta {
    pub tau: f64,
    pub tau_init: f64,
    pub d_min: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockMeta {
    pub channels: Vec<usize>,
    pub selector: Option<SelectorMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
    /// Byte offset into the blob.
    pub offset: usize,
    /// Number of `f64` values.
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema: u32,
    pub dtype: String,
    pub seed: u64,
    pub config: ModelConfig,
    pub blob: String,
    pub blocks: Vec<BlockMeta>,
    pub tensors: Vec<TensorEntry>,
}

fn blob_path(manifest: &Path, blob: &str) -> PathBuf {
    manifest.parent().unwrap_or(Path::new(".")).join(blob)
}

fn all_tensors(net: &KcrNet) -> Vec<(String, Matrix)> {
    let mut out: Vec<(String, Matrix)> = net.params.named().into_iter().map(|(n, m)| (n, m.clone())).collect();
    for (j, s) in net.selectors.iter().enumerate() {
        if let Some(s) = s {
            out.push((format!("blocks.{j}.alpha"), Matrix::row_vector(&s.alpha)));
        }
    }
    out
}

/// Writes `path` (manifest) and a sibling `.bin` blob.
pub fn save_checkpoint(net: &KcrNet, seed: u64, path: &Path) -> Result<Manifest> {
    let blob_name = format!(
        "{}.bin",
        path.file_stem().and_then(|s| s.to_str()).unwrap_or("checkpoint")
    );
    let mut bytes = Vec::new();
    let mut tensors = Vec::new();
    for (name, m) in all_tensors(net) {
        tensors.push(TensorEntry { name, shape: [m.rows(), m.cols()], offset: bytes.len(), len: m.len() });
        for v in m.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = Manifest {
        schema: CHECKPOINT_SCHEMA,
        dtype: DTYPE.into(),
        seed,
        config: net.config.clone(),
        blob: blob_name.clone(),
        blocks: net
            .channels
            .iter()
            .zip(&net.selectors)
            .map(|(c, s)| BlockMeta {
                channels: c.clone(),
                selector: s.as_ref().map(|s| SelectorMeta { tau: s.tau, tau_init: s.tau_init, d_min: s.d_min }),
            })
            .collect(),
        tensors,
    };
    let blob = blob_path(path, &blob_name);
    fs::write(&blob, &bytes).map_err(|e| KcrError::io(&blob, e))?;
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(path, json).map_err(|e| KcrError::io(path, e))?;
    Ok(manifest)
}

/// Reads a checkpoint written by [`save_checkpoint`]; returns the network and seed.
pub fn load_checkpoint(path: &Path) -> Result<(KcrNet, u64)> {
    let text = fs::read_to_string(path).map_err(|e| KcrError::io(path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| KcrError::Schema(format!("manifest: {e}")))?;
    if manifest.schema != CHECKPOINT_SCHEMA {
        return Err(KcrError::Schema(format!("unsupported checkpoint schema {}", manifest.schema)));
    }
    if manifest.dtype != DTYPE {
        return Err(KcrError::Schema(format!("unsupported dtype {}", manifest.dtype)));
    }
    let cfg = &manifest.config;
    cfg.validate()?;
    if manifest.blocks.len() != cfg.depth {
        return Err(KcrError::Schema("block count does not match depth".into()));
    }
    let blob = blob_path(path, &manifest.blob);
    let bytes = fs::read(&blob).map_err(|e| KcrError::io(&blob, e))?;

    let channels: Vec<Vec<usize>> = manifest.blocks.iter().map(|b| b.channels.clone()).collect();
    for c in &channels {
        if c.is_empty() || c.iter().any(|&i| i >= cfg.dim) || c.windows(2).any(|w| w[0] >= w[1]) {
            return Err(KcrError::Schema("block channels must be strictly increasing indices below dim".into()));
        }
    }
    let mut net = KcrNet::skeleton(cfg, channels, &mut Rng::new(manifest.seed, 0))?;
    for (j, b) in manifest.blocks.iter().enumerate() {
        net.selectors[j] = match &b.selector {
            Some(s) => {
                let mut sel = ChannelSelector::new(b.channels.len(), 0.0, s.tau_init, s.d_min)?;
                sel.tau = s.tau;
                Some(sel)
            }
            None => None,
        };
    }

    let read = |e: &TensorEntry| -> Result<Matrix> {
        let end = e.offset + e.len * 8;
        if e.shape[0] * e.shape[1] != e.len || end > bytes.len() {
            return Err(KcrError::Schema(format!("tensor {} has inconsistent extent", e.name)));
        }
        let data = bytes[e.offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Matrix::new(e.shape[0], e.shape[1], data)
    };
    let find = |name: &str| {
        manifest
            .tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| KcrError::Schema(format!("missing tensor {name}")))
    };

    let names = net.params.names();
    let expected = names.len() + net.selectors.iter().flatten().count();
    if manifest.tensors.len() != expected {
        return Err(KcrError::Schema(format!("expected {expected} tensors, found {}", manifest.tensors.len())));
    }
    for (name, slot) in names.iter().zip(net.params.tensors_mut()) {
        let m = read(find(name)?)?;
        if m.shape() != slot.shape() {
            return Err(KcrError::Schema(format!("tensor {name}: shape {:?}, expected {:?}", m.shape(), slot.shape())));
        }
        *slot = m;
    }
    for (j, sel) in net.selectors.iter_mut().enumerate() {
        if let Some(s) = sel {
            let m = read(find(&format!("blocks.{j}.alpha"))?)?;
            if m.shape() != (1, s.width()) {
                return Err(KcrError::Schema(format!("blocks.{j}.alpha has wrong shape")));
            }
            s.alpha = m.into_data();
        }
    }
    Ok((net, manifest.seed))
}
