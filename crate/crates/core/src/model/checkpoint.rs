//! Versioned binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! | offset | size | content                                   |
//! |--------|------|-------------------------------------------|
//! | 0      | 8    | magic `MMLSTMCK`                          |
//! | 8      | 4    | format version (`u32`, currently 1)       |
//! | 12     | 8    | header length `H` in bytes (`u64`)        |
//! | 20     | H    | UTF-8 JSON header                         |
//! | 20+H   | …    | tensor payload, `f64` little-endian       |
//!
//! The header records the model config, seeds, training progress and the
//! ordered tensor list (`name`, `rows`, `cols`). The payload holds each tensor
//! row-major in that order: `w v b m embed out out_bias mean_visual`.
//! Writing the same checkpoint twice yields identical bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LstmParams, Model, ModelConfig, TENSOR_NAMES};
use crate::error::{write_file, Error, Result};
use crate::tensor::Matrix;

const MAGIC: &[u8; 8] = b"MMLSTMCK";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub init: u64,
    pub train: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub epochs_completed: usize,
    pub learning_rate: f64,
    pub best_valid_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub seeds: Seeds,
    pub progress: Progress,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    seeds: Seeds,
    progress: Progress,
    tensors: Vec<TensorEntry>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.model.params;
        let mut tensors: Vec<TensorEntry> = TENSOR_NAMES
            .iter()
            .zip(p.shapes())
            .map(|(name, (rows, cols))| TensorEntry {
                name: name.to_string(),
                rows,
                cols,
            })
            .collect();
        tensors.push(TensorEntry {
            name: "mean_visual".into(),
            rows: self.model.mean_visual.len(),
            cols: 1,
        });
        let header = Header {
            config: self.model.config.clone(),
            seeds: self.seeds,
            progress: self.progress.clone(),
            tensors,
        };
        let json = serde_json::to_vec(&header).expect("checkpoint header serializes");
        let mut out = Vec::with_capacity(20 + json.len() + 8 * p.tensors().iter().map(|t| t.len()).sum::<usize>());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in p.tensors().into_iter().chain(std::iter::once(self.model.mean_visual.as_slice())) {
            for x in t {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Checkpoint(msg.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = bytes.get(20..).ok_or_else(|| bad("truncated"))?;
        let json = body.get(..hlen).ok_or_else(|| bad("truncated header"))?;
        let header: Header =
            serde_json::from_slice(json).map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
        header.config.validate()?;
        let expected = LstmParams::zeros(&header.config);
        let mut shapes: Vec<(usize, usize)> = expected.shapes().to_vec();
        shapes.push((header.config.visual_dim, 1));
        let names: Vec<&str> = TENSOR_NAMES.iter().copied().chain(["mean_visual"]).collect();
        if header.tensors.len() != names.len() {
            return Err(bad("tensor list does not match config"));
        }
        for ((entry, name), shape) in header.tensors.iter().zip(&names).zip(&shapes) {
            if entry.name != *name || (entry.rows, entry.cols) != *shape {
                return Err(Error::Checkpoint(format!(
                    "tensor {} has shape {}x{}, expected {name} {}x{}",
                    entry.name, entry.rows, entry.cols, shape.0, shape.1
                )));
            }
        }
        let payload = &body[hlen..];
        let total: usize = shapes.iter().map(|(r, c)| r * c).sum();
        if payload.len() != total * 8 {
            return Err(Error::Checkpoint(format!(
                "payload has {} bytes, expected {}",
                payload.len(),
                total * 8
            )));
        }
        let mut values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let mut take = |(r, c): (usize, usize)| -> Vec<f64> { values.by_ref().take(r * c).collect() };
        let mat = |shape: (usize, usize), data: Vec<f64>| Matrix::from_vec(shape.0, shape.1, data);
        let params = LstmParams {
            w: mat(shapes[0], take(shapes[0])),
            v: mat(shapes[1], take(shapes[1])),
            b: take(shapes[2]),
            m: mat(shapes[3], take(shapes[3])),
            embed: mat(shapes[4], take(shapes[4])),
            out: mat(shapes[5], take(shapes[5])),
            out_bias: take(shapes[6]),
        };
        let mean_visual = take(shapes[7]);
        Ok(Checkpoint {
            model: Model {
                config: header.config,
                params,
                mean_visual,
            },
            seeds: header.seeds,
            progress: header.progress,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| e.context(path.display().to_string()))
    }
}
