//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes  "CNAVCKPT"
//! version      u32      1
//! header_len   u32
//! header       header_len bytes of UTF-8 JSON (kind, architecture, extra)
//! block_count  u32
//! block_count × {
//!     name_len u16, name (UTF-8),
//!     rows u32, cols u32,
//!     rows·cols f64 values, row-major
//! }
//! ```
//!
//! Network blocks are named `<prefix><net>.<layer>.weight` (`out × in`) and
//! `<prefix><net>.<layer>.bias` (`1 × out`) with `<net>` one of `embedding`,
//! `feature`, `attention`, `value`. Trailing bytes are an error.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{SarlConfig, SarlParams};
use crate::error::{Error, Result};
use crate::numeric::{Mlp, ParamSet};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CNAVCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    /// `"model"` for bare networks, `"training"` for resumable trainer state.
    pub kind: String,
    pub architecture: SarlConfig,
    #[serde(default)]
    pub extra: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub blocks: Vec<ParamBlock>,
}

const NETS: [&str; 4] = ["embedding", "feature", "attention", "value"];

fn nets(p: &SarlParams) -> [&Mlp; 4] {
    [&p.embed, &p.feature, &p.score, &p.value]
}

fn nets_mut(p: &mut SarlParams) -> [&mut Mlp; 4] {
    [&mut p.embed, &mut p.feature, &mut p.score, &mut p.value]
}

impl Checkpoint {
    pub fn new(kind: &str, architecture: SarlConfig) -> Self {
        Checkpoint {
            header: CheckpointHeader {
                kind: kind.to_string(),
                architecture,
                extra: serde_json::Value::Null,
            },
            blocks: Vec::new(),
        }
    }

    pub fn from_params(params: &SarlParams) -> Self {
        let mut c = Self::new("model", params.config().clone());
        c.push_params("", params);
        c
    }

    pub fn push_params(&mut self, prefix: &str, params: &SarlParams) {
        for (net, mlp) in NETS.iter().zip(nets(params)) {
            for (k, layer) in mlp.layers().iter().enumerate() {
                self.blocks.push(ParamBlock {
                    name: format!("{prefix}{net}.{k}.weight"),
                    rows: layer.weight.rows(),
                    cols: layer.weight.cols(),
                    values: layer.weight.as_slice().to_vec(),
                });
                self.blocks.push(ParamBlock {
                    name: format!("{prefix}{net}.{k}.bias"),
                    rows: 1,
                    cols: layer.bias.len(),
                    values: layer.bias.clone(),
                });
            }
        }
    }

    /// Flat tensors stored as `<prefix><index>`, each `1 × len`.
    pub fn push_tensors(&mut self, prefix: &str, tensors: &[Vec<f64>]) {
        for (k, t) in tensors.iter().enumerate() {
            self.blocks.push(ParamBlock {
                name: format!("{prefix}{k}"),
                rows: 1,
                cols: t.len(),
                values: t.clone(),
            });
        }
    }

    pub fn block(&self, name: &str) -> Option<&ParamBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn tensors(&self, prefix: &str, count: usize, path: &Path) -> Result<Vec<Vec<f64>>> {
        (0..count)
            .map(|k| {
                let name = format!("{prefix}{k}");
                self.block(&name)
                    .map(|b| b.values.clone())
                    .ok_or_else(|| Error::format(path, format!("missing block {name}")))
            })
            .collect()
    }

    pub fn params(&self, path: &Path) -> Result<SarlParams> {
        self.params_with_prefix("", path)
    }

    pub fn params_with_prefix(&self, prefix: &str, path: &Path) -> Result<SarlParams> {
        let config = self.header.architecture.clone();
        let mut params = SarlParams::new(config, &mut ChaCha8Rng::seed_from_u64(0))
            .map_err(|e| Error::format(path, format!("bad architecture: {e}")))?;
        for (net, mlp) in NETS.iter().zip(nets_mut(&mut params)) {
            for (k, layer) in mlp.layers_mut().iter_mut().enumerate() {
                let w = format!("{prefix}{net}.{k}.weight");
                let b = format!("{prefix}{net}.{k}.bias");
                let weight = self.shaped(&w, layer.weight.rows(), layer.weight.cols(), path)?;
                layer.weight.as_mut_slice().copy_from_slice(weight);
                let bias = self.shaped(&b, 1, layer.bias.len(), path)?;
                layer.bias.copy_from_slice(bias);
            }
        }
        if let Some(t) = params.tensors().iter().find(|t| t.iter().any(|v| !v.is_finite())) {
            return Err(Error::format(
                path,
                format!("non-finite parameter in a tensor of {} values", t.len()),
            ));
        }
        Ok(params)
    }

    fn shaped(&self, name: &str, rows: usize, cols: usize, path: &Path) -> Result<&[f64]> {
        let block = self
            .block(name)
            .ok_or_else(|| Error::format(path, format!("missing block {name}")))?;
        if block.rows != rows || block.cols != cols {
            return Err(Error::format(
                path,
                format!(
                    "block {name} is {}×{}, architecture needs {rows}×{cols}",
                    block.rows, block.cols
                ),
            ));
        }
        Ok(&block.values)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header serializes");
        let payload: usize = self
            .blocks
            .iter()
            .map(|b| 10 + b.name.len() + 8 * b.values.len())
            .sum();
        let mut out = Vec::with_capacity(20 + header.len() + payload);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(self.blocks.len() as u32).to_le_bytes());
        for b in &self.blocks {
            out.extend_from_slice(&(b.name.len() as u16).to_le_bytes());
            out.extend_from_slice(b.name.as_bytes());
            out.extend_from_slice(&(b.rows as u32).to_le_bytes());
            out.extend_from_slice(&(b.cols as u32).to_le_bytes());
            for v in &b.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Parses a checkpoint; `path` only labels errors.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { bytes, at: 0, path };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::format(path, "not a checkpoint (bad magic)"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(
                path,
                format!("unsupported checkpoint version {version}"),
            ));
        }
        let header_len = r.u32()? as usize;
        let header: CheckpointHeader = serde_json::from_slice(r.take(header_len)?)
            .map_err(|e| Error::format(path, format!("bad header: {e}")))?;
        let count = r.u32()? as usize;
        let mut blocks = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name_len = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::format(path, "block name is not UTF-8"))?
                .to_string();
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let len = rows
                .checked_mul(cols)
                .and_then(|n| n.checked_mul(8))
                .ok_or_else(|| Error::format(path, format!("block {name} is too large")))?;
            let values = r
                .take(len)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            blocks.push(ParamBlock {
                name,
                rows,
                cols,
                values,
            });
        }
        if r.at != bytes.len() {
            return Err(Error::format(
                path,
                format!("{} trailing bytes", bytes.len() - r.at),
            ));
        }
        Ok(Checkpoint { header, blocks })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        // Write-then-rename so an interrupted save never leaves a torn file.
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&end| end <= self.bytes.len())
            .ok_or_else(|| Error::format(self.path, format!("truncated at byte {}", self.at)))?;
        let out = &self.bytes[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
