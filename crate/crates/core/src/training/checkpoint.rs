//! Single-file checkpoint: magic, header length, JSON header, f32 payload.
//!
//! ```text
//! b"SFTCKPT1" | u64 LE header length | header JSON | little-endian f32 data
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sftformer_autograd::Tensor;

use crate::config::SftformerConfig;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SFTCKPT1";

/// Position of the data-order sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct SamplerState {
    pub seed: u64,
    pub epoch: u64,
    pub cursor: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: SftformerConfig,
    /// Completed optimizer steps.
    pub step: usize,
    pub sampler: SamplerState,
    pub adam_t: u64,
    pub params: BTreeMap<String, Tensor<f32>>,
    /// First and second moments keyed like `params`; empty before the first step.
    pub adam_m: BTreeMap<String, Tensor<f32>>,
    pub adam_v: BTreeMap<String, Tensor<f32>>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    group: String,
    name: String,
    shape: Vec<usize>,
    /// Offset in f32 elements from the start of the payload.
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config_toml: String,
    config_hash: String,
    step: usize,
    sampler: SamplerState,
    adam_t: u64,
    tensors: Vec<TensorEntry>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut tensors = Vec::new();
        let mut payload: Vec<u8> = Vec::new();
        let mut offset = 0;
        for (group, map) in [("param", &self.params), ("adam_m", &self.adam_m), ("adam_v", &self.adam_v)] {
            for (name, t) in map {
                tensors.push(TensorEntry {
                    group: group.into(),
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    offset,
                });
                offset += t.len();
                for v in t.data() {
                    payload.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        let header = Header {
            config_toml: self.config.to_toml(),
            config_hash: self.config.hash(),
            step: self.step,
            sampler: self.sampler,
            adam_t: self.adam_t,
            tensors,
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + json.len() + payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("missing checkpoint magic"));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(body).map_err(|e| bad(format!("header: {e}")))?;
        let config = SftformerConfig::from_toml(&header.config_toml)?;
        if config.hash() != header.config_hash {
            return Err(bad(format!(
                "config hash {} does not match recorded {}",
                config.hash(),
                header.config_hash
            )));
        }
        let payload = &bytes[16 + hlen..];
        if payload.len() % 4 != 0 {
            return Err(bad("payload is not a whole number of f32 values"));
        }
        let mut ckpt = Checkpoint {
            config,
            step: header.step,
            sampler: header.sampler,
            adam_t: header.adam_t,
            params: BTreeMap::new(),
            adam_m: BTreeMap::new(),
            adam_v: BTreeMap::new(),
        };
        for e in header.tensors {
            let n: usize = e.shape.iter().product();
            let raw = payload
                .get(e.offset * 4..(e.offset + n) * 4)
                .ok_or_else(|| bad(format!("tensor {} runs past the payload", e.name)))?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let t = Tensor::new(e.shape, data)?;
            let map = match e.group.as_str() {
                "param" => &mut ckpt.params,
                "adam_m" => &mut ckpt.adam_m,
                "adam_v" => &mut ckpt.adam_v,
                other => return Err(bad(format!("unknown tensor group {other:?}"))),
            };
            map.insert(e.name, t);
        }
        Ok(ckpt)
    }

    /// Writes atomically through a sibling temporary file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp");
        let io = |source| Error::Container {
            path: path.to_path_buf(),
            source,
        };
        {
            let mut f = fs::File::create(&tmp).map_err(io)?;
            f.write_all(&bytes).map_err(io)?;
            f.sync_all().map_err(io)?;
        }
        fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|source| Error::Container {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}
