//! Versioned binary checkpoint: magic, version, JSON shape table, then a
//! little-endian f32 payload. File -> memory -> file round trips are
//! byte-exact.

use crate::error::{Error, Result};
use crate::net::backbone::{BackboneCfg, ConvBlock, EmbeddingParams};
use crate::net::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"FMCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    backbone: Option<BackboneCfg>,
    tensors: Vec<TensorMeta>,
}

/// An ordered set of named f32 tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub backbone: Option<BackboneCfg>,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            backbone: self.backbone,
            tensors: self
                .tensors
                .iter()
                .map(|(name, t)| TensorMeta {
                    name: name.clone(),
                    shape: t.shape.clone(),
                })
                .collect(),
        };
        let header_json = serde_json::to_vec(&header)?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
        out.extend_from_slice(&header_json);
        for (_, t) in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        if bytes.len() < 12 + hlen {
            return Err(Error::Checkpoint("truncated header".into()));
        }
        let header: Header = serde_json::from_slice(&bytes[12..12 + hlen])?;
        let mut offset = 12 + hlen;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for meta in header.tensors {
            let numel: usize = meta.shape.iter().product();
            let end = offset + numel * 4;
            if bytes.len() < end {
                return Err(Error::Checkpoint(format!(
                    "truncated payload for tensor {}",
                    meta.name
                )));
            }
            let data: Vec<f32> = bytes[offset..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            offset = end;
            tensors.push((meta.name, Tensor::from_vec(&meta.shape, data)?));
        }
        if offset != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes after payload".into()));
        }
        Ok(Checkpoint {
            backbone: header.backbone,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Checkpoint::from_bytes(&bytes)
    }
}

/// Backbone params (plus optional extra tensors, e.g. a classifier head)
/// into a checkpoint.
pub fn pack(
    params: &EmbeddingParams<f32>,
    extra: &[(String, Tensor<f32>)],
) -> Checkpoint {
    let mut tensors: Vec<(String, Tensor<f32>)> = params
        .named_tensors()
        .into_iter()
        .map(|(n, t)| (n, t.clone()))
        .collect();
    tensors.extend(extra.iter().cloned());
    Checkpoint {
        backbone: Some(params.cfg),
        tensors,
    }
}

/// Rebuild backbone params from a checkpoint; extra tensors stay available
/// through [`Checkpoint::get`].
pub fn unpack(ck: &Checkpoint) -> Result<EmbeddingParams<f32>> {
    let cfg = ck
        .backbone
        .ok_or_else(|| Error::Checkpoint("checkpoint has no backbone config".into()))?;
    let mut blocks = Vec::with_capacity(cfg.blocks);
    for i in 0..cfg.blocks {
        let grab = |suffix: &str| -> Result<Tensor<f32>> {
            ck.get(&format!("block{i}.{suffix}"))
                .cloned()
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor block{i}.{suffix}")))
        };
        blocks.push(ConvBlock {
            w: grab("w")?,
            b: grab("b")?,
            gamma: grab("gamma")?,
            beta: grab("beta")?,
        });
    }
    Ok(EmbeddingParams { cfg, blocks })
}
