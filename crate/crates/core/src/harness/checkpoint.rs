//! Binary checkpoint, little-endian:
//!
//! ```text
//! "RNDN1" | version u32 | header length u32 | header JSON
//! repeated: name length u32 | name | rank u32 | dims u32 × rank | f64 payload
//! ```
//!
//! The header holds the model configuration and training metadata.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::synth::hex;
use crate::gradkit::ParamStore;
use crate::net::{init_params, ModelConfig};

pub const MAGIC: &[u8; 5] = b"RNDN1";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (expected {VERSION})")]
    Version { found: u32 },
    #[error("unexpected end of checkpoint")]
    Truncated,
    #[error("checkpoint header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("config digest mismatch: header says {stored}, config hashes to {computed}")]
    Digest { stored: String, computed: String },
    #[error("entry '{name}' has shape {got:?}, config expects {expected:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("entry '{0}' is missing")]
    MissingEntry(String),
    #[error("unexpected entry '{0}'")]
    UnexpectedEntry(String),
    #[error("entry name is not valid UTF-8")]
    EntryName,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epoch: usize,
    pub seed: u64,
    pub config_digest: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    /// Parameters and normalization running statistics.
    pub params: ParamStore,
    pub meta: TrainingMeta,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    meta: TrainingMeta,
}

/// SHA-256 of the configuration's JSON encoding, hex.
pub fn config_digest(cfg: &ModelConfig) -> String {
    hex(&Sha256::digest(
        serde_json::to_vec(cfg).expect("config serializes"),
    ))
}

impl Checkpoint {
    /// Copies parameters and buffers; optimizer state is not kept.
    pub fn new(config: ModelConfig, store: &ParamStore, epoch: usize, seed: u64) -> Self {
        let config_digest = config_digest(&config);
        let mut params = ParamStore::new();
        for (k, v) in store.params() {
            params.insert(k, v.clone());
        }
        for (k, v) in store.buffers() {
            params.insert_buffer(k, v.clone());
        }
        Self {
            config,
            params,
            meta: TrainingMeta {
                epoch,
                seed,
                config_digest,
            },
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&Header {
            model: self.config.clone(),
            meta: self.meta.clone(),
        })
        .expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        put_u32(&mut out, header.len() as u32);
        out.extend_from_slice(&header);
        let entries = self.params.params().chain(self.params.buffers());
        for (name, t) in entries {
            put_u32(&mut out, name.len() as u32);
            out.extend_from_slice(name.as_bytes());
            put_u32(&mut out, 2);
            put_u32(&mut out, t.nrows() as u32);
            put_u32(&mut out, t.ncols() as u32);
            for v in t.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CheckpointError::Version { found: version });
        }
        let len = r.u32()? as usize;
        let header: Header = serde_json::from_slice(r.take(len)?)?;
        let computed = config_digest(&header.model);
        if computed != header.meta.config_digest {
            return Err(CheckpointError::Digest {
                stored: header.meta.config_digest,
                computed,
            });
        }
        let template = init_params(&header.model, 0).map_err(|e| {
            CheckpointError::Header(serde::de::Error::custom(format!("model: {e}")))
        })?;
        let mut params = ParamStore::new();
        let mut seen = 0;
        while !r.done() {
            let n = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(n)?)
                .map_err(|_| CheckpointError::EntryName)?
                .to_string();
            let rank = r.u32()? as usize;
            let dims = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>, _>>()?;
            let count: usize = dims.iter().product();
            let raw = r.take(count.checked_mul(8).ok_or(CheckpointError::Truncated)?)?;
            let is_buffer = template.buffer(&name).is_ok();
            let expected = if is_buffer {
                template.buffer(&name)
            } else {
                template.get(&name)
            }
            .map_err(|_| CheckpointError::UnexpectedEntry(name.clone()))?;
            if dims != expected.shape() {
                return Err(CheckpointError::Shape {
                    name,
                    expected: expected.shape().to_vec(),
                    got: dims,
                });
            }
            let vals = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let t = Array2::from_shape_vec(expected.raw_dim(), vals).expect("size checked");
            if params.get(&name).is_ok() || params.buffer(&name).is_ok() {
                return Err(CheckpointError::UnexpectedEntry(name));
            }
            if is_buffer {
                params.insert_buffer(name, t);
            } else {
                params.insert(name, t);
            }
            seen += 1;
        }
        if seen != template.params().count() + template.buffers().count() {
            let (missing, _) = template
                .params()
                .chain(template.buffers())
                .find(|(k, _)| params.get(k).is_err() && params.buffer(k).is_err())
                .expect("count differs");
            return Err(CheckpointError::MissingEntry(missing.to_string()));
        }
        Ok(Self {
            config: header.model,
            params,
            meta: header.meta,
        })
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(CheckpointError::Truncated)?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<(), CheckpointError> {
    fs::write(path, ckpt.to_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    Checkpoint::from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Checkpoint {
        let cfg = ModelConfig {
            hidden: 8,
            blocks: 1,
            ..Default::default()
        };
        let params = init_params(&cfg, 5).unwrap();
        Checkpoint::new(cfg, &params, 3, 5)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = small();
        let bytes = c.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn truncation_is_reported() {
        let bytes = small().to_bytes();
        for cut in [3, 7, 12, 40, bytes.len() - 1] {
            let e = Checkpoint::from_bytes(&bytes[..cut]).unwrap_err();
            assert_eq!(e.to_string(), "unexpected end of checkpoint", "cut {cut}");
        }
    }

    #[test]
    fn distinct_errors() {
        let bytes = small().to_bytes();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            Checkpoint::from_bytes(&bad),
            Err(CheckpointError::BadMagic)
        ));
        let mut bad = bytes.clone();
        bad[5] = 9;
        assert!(matches!(
            Checkpoint::from_bytes(&bad),
            Err(CheckpointError::Version { found: 9 })
        ));

        let mut c = small();
        c.meta.config_digest = "00".into();
        assert!(matches!(
            Checkpoint::from_bytes(&c.to_bytes()),
            Err(CheckpointError::Digest { .. })
        ));

        let mut c = small();
        *c.params.get_mut("head.w").unwrap() = Array2::zeros((3, 3));
        match Checkpoint::from_bytes(&c.to_bytes()) {
            Err(CheckpointError::Shape { name, .. }) => assert_eq!(name, "head.w"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn header_errors_name_the_field() {
        let c = small();
        let mut v: serde_json::Value = serde_json::to_value(Header {
            model: c.config.clone(),
            meta: c.meta.clone(),
        })
        .unwrap();
        v["meta"].as_object_mut().unwrap().remove("seed");
        let header = serde_json::to_vec(&v).unwrap();
        let mut bytes = MAGIC.to_vec();
        put_u32(&mut bytes, VERSION);
        put_u32(&mut bytes, header.len() as u32);
        bytes.extend_from_slice(&header);
        let e = Checkpoint::from_bytes(&bytes).unwrap_err();
        assert!(e.to_string().contains("seed"), "{e}");
    }
}
