//! Labelled image sets, IDX file I/O and the synthetic Gaussian-mixture generator.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{KcrError, Result};
use crate::numerics::{Matrix, Rng};

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;

/// Images as rows of `side × side × channels` values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Matrix,
    pub labels: Vec<usize>,
    pub side: usize,
    pub channels: usize,
    pub classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            images: self.images.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            side: self.side,
            channels: self.channels,
            classes: self.classes,
        }
    }

    /// Row-wise one-hot label matrix `n × classes`.
    pub fn one_hot(&self) -> Matrix {
        Matrix::from_fn(self.len(), self.classes, |i, c| if self.labels[i] == c { 1.0 } else { 0.0 })
    }
}

/// Parameters of the synthetic benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub image_side: usize,
    /// Standard deviation of per-pixel Gaussian noise, in intensity units.
    pub noise: f64,
    /// Gaussian blobs per class template.
    pub blobs: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { classes: 4, n_train: 2048, n_val: 512, image_side: 16, noise: 0.6, blobs: 3 }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.classes > 256 {
            return Err(KcrError::Config(format!("classes {} not in 1..=256", self.classes)));
        }
        if self.n_train < self.classes || self.n_val == 0 {
            return Err(KcrError::Config(format!(
                "need n_train >= classes ({}) and n_val >= 1",
                self.classes
            )));
        }
        if self.image_side == 0 || self.blobs == 0 {
            return Err(KcrError::Config("image_side and blobs must be >= 1".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(KcrError::Config(format!("noise must be finite and >= 0, got {}", self.noise)));
        }
        Ok(())
    }
}

fn templates(spec: &SyntheticSpec, rng: &mut Rng) -> Vec<Vec<f64>> {
    let s = spec.image_side as f64;
    (0..spec.classes)
        .map(|_| {
            let blobs: Vec<(f64, f64, f64)> = (0..spec.blobs)
                .map(|_| (rng.uniform_range(0.0, s), rng.uniform_range(0.0, s), rng.uniform_range(0.12, 0.3) * s))
                .collect();
            let mut t = vec![0.0; spec.image_side * spec.image_side];
            for y in 0..spec.image_side {
                for x in 0..spec.image_side {
                    let v: f64 = blobs
                        .iter()
                        .map(|&(cx, cy, w)| {
                            let d2 = (x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2);
                            (-d2 / (2.0 * w * w)).exp()
                        })
                        .sum();
                    t[y * spec.image_side + x] = v.min(1.0);
                }
            }
            t
        })
        .collect()
}

fn sample_split(spec: &SyntheticSpec, templates: &[Vec<f64>], n: usize, rng: &mut Rng) -> Vec<(Vec<u8>, u8)> {
    let mut labels: Vec<usize> = (0..n).map(|i| i % spec.classes).collect();
    rng.shuffle(&mut labels);
    labels
        .into_iter()
        .map(|c| {
            let img = templates[c]
                .iter()
                .map(|&t| {
                    let v = if spec.noise > 0.0 { t + spec.noise * rng.normal() } else { t };
                    (v.clamp(0.0, 1.0) * 255.0).round() as u8
                })
                .collect();
            (img, c as u8)
        })
        .collect()
}

/// Raw 8-bit images and labels, the on-disk representation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawSplit {
    pub side: usize,
    pub images: Vec<Vec<u8>>,
    pub labels: Vec<u8>,
}

impl RawSplit {
    pub fn to_dataset(&self, classes: usize) -> Result<Dataset> {
        let pixels = self.side * self.side;
        let mut data = Vec::with_capacity(self.images.len() * pixels);
        for img in &self.images {
            data.extend(img.iter().map(|&b| f64::from(b) / 255.0));
        }
        let labels: Vec<usize> = self.labels.iter().map(|&l| usize::from(l)).collect();
        if let Some(bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(KcrError::Config(format!("label {bad} out of range for {classes} classes")));
        }
        Ok(Dataset {
            images: Matrix::new(self.images.len(), pixels, data)?,
            labels,
            side: self.side,
            channels: 1,
            classes,
        })
    }
}

/// Train and validation splits sharing class templates.
pub fn generate(spec: &SyntheticSpec, seed: u64) -> Result<(RawSplit, RawSplit)> {
    spec.validate()?;
    let mut trng = Rng::new(seed, 100);
    let t = templates(spec, &mut trng);
    let split = |n, stream| {
        let pairs = sample_split(spec, &t, n, &mut Rng::new(seed, stream));
        let (images, labels) = pairs.into_iter().unzip();
        RawSplit { side: spec.image_side, images, labels }
    };
    Ok((split(spec.n_train, 101), split(spec.n_val, 102)))
}

pub fn encode_idx_images(images: &[Vec<u8>], side: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * side * side);
    out.extend_from_slice(&IDX_IMAGES.to_be_bytes());
    for d in [images.len(), side, side] {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    for img in images {
        out.extend_from_slice(img);
    }
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| KcrError::Schema(format!("{what}: truncated header")))
}

/// Parses an unsigned-byte 3-D IDX image file; images must be square.
pub fn decode_idx_images(bytes: &[u8]) -> Result<(usize, Vec<Vec<u8>>)> {
    let magic = be_u32(bytes, 0, "idx images")?;
    if magic != IDX_IMAGES {
        return Err(KcrError::Schema(format!("idx images: bad magic {magic:#010x}")));
    }
    let n = be_u32(bytes, 4, "idx images")? as usize;
    let rows = be_u32(bytes, 8, "idx images")? as usize;
    let cols = be_u32(bytes, 12, "idx images")? as usize;
    if rows != cols {
        return Err(KcrError::Schema(format!("idx images: {rows}×{cols} images are not square")));
    }
    let body = &bytes[16..];
    if body.len() != n * rows * cols {
        return Err(KcrError::Schema(format!(
            "idx images: payload has {} bytes, header implies {}",
            body.len(),
            n * rows * cols
        )));
    }
    let images = if rows == 0 { vec![Vec::new(); n] } else { body.chunks_exact(rows * cols).map(<[u8]>::to_vec).collect() };
    Ok((rows, images))
}

pub fn decode_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, "idx labels")?;
    if magic != IDX_LABELS {
        return Err(KcrError::Schema(format!("idx labels: bad magic {magic:#010x}")));
    }
    let n = be_u32(bytes, 4, "idx labels")? as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return Err(KcrError::Schema(format!("idx labels: payload has {} bytes, header says {n}", body.len())));
    }
    Ok(body.to_vec())
}

/// File names of one split inside a dataset directory.
pub fn split_paths(dir: &Path, split: &str) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("{split}-images-idx3-ubyte")),
        dir.join(format!("{split}-labels-idx1-ubyte")),
    )
}

pub fn write_split(dir: &Path, split: &str, raw: &RawSplit) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| KcrError::io(dir, e))?;
    let (ip, lp) = split_paths(dir, split);
    fs::write(&ip, encode_idx_images(&raw.images, raw.side)).map_err(|e| KcrError::io(&ip, e))?;
    fs::write(&lp, encode_idx_labels(&raw.labels)).map_err(|e| KcrError::io(&lp, e))?;
    Ok(())
}

pub fn read_split(dir: &Path, split: &str) -> Result<RawSplit> {
    let (ip, lp) = split_paths(dir, split);
    let ib = fs::read(&ip).map_err(|e| KcrError::io(&ip, e))?;
    let lb = fs::read(&lp).map_err(|e| KcrError::io(&lp, e))?;
    let (side, images) = decode_idx_images(&ib)?;
    let labels = decode_idx_labels(&lb)?;
    if labels.len() != images.len() {
        return Err(KcrError::Schema(format!(
            "{split}: {} images but {} labels",
            images.len(),
            labels.len()
        )));
    }
    Ok(RawSplit { side, images, labels })
}
