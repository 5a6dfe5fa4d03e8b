//! Checkpoint archive: named 32-bit float parameter arrays plus a JSON
//! metadata record.
//!
//! Layout (all integers little-endian):
//! ```text
//! magic  8 bytes  "CSPCKPT\0"
//! u64    metadata byte length
//! ...    metadata JSON (version, stage, epoch, seed, model, vocab, optimizer)
//! u64    parameter count
//! per parameter, in ascending name order:
//!   u64  name byte length, then the UTF-8 name
//!   u64  rows, u64 cols
//!   f32  rows*cols values, row-major
//! ```
//! Parameters are quantized to f32 when a checkpoint is built, so
//! save -> load -> save reproduces the file byte for byte.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Vocabulary;
use crate::model::{ModelConfig, ParamStore};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"CSPCKPT\0";

/// Bump on any layout or metadata schema change.
pub const CHECKPOINT_VERSION: u32 = 1;

/// Optimizer settings recorded for reproducibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerMeta {
    pub name: String,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

/// Checkpoint metadata. `version` is mandatory in the stored JSON; a record
/// without it is rejected rather than defaulted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub version: u32,
    pub stage: u8,
    pub epoch: usize,
    pub seed: u64,
    pub model: ModelConfig,
    pub vocab: Vocabulary,
    pub optimizer: OptimizerMeta,
}

/// Named-parameter archive for all four sub-networks plus metadata.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: ParamStore,
}

/// Round every value to f32 precision so in-memory parameters match what
/// the archive can represent.
fn quantize(store: &ParamStore) -> ParamStore {
    let map: BTreeMap<String, Array2<f64>> = store
        .arrays()
        .iter()
        .map(|(k, v)| (k.clone(), v.mapv(|x| x as f32 as f64)))
        .collect();
    ParamStore::from_arrays(map)
}

/// Append the named-array section: count, then per array the name, shape,
/// and f32 values in ascending name order.
pub(crate) fn write_array_block(out: &mut Vec<u8>, arrays: &BTreeMap<String, Array2<f64>>) {
    out.extend_from_slice(&(arrays.len() as u64).to_le_bytes());
    for (name, value) in arrays {
        out.extend_from_slice(&(name.len() as u64).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(value.nrows() as u64).to_le_bytes());
        out.extend_from_slice(&(value.ncols() as u64).to_le_bytes());
        for v in value.iter() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
}

pub(crate) fn read_array_block(r: &mut Reader<'_>) -> Result<BTreeMap<String, Array2<f64>>> {
    let n_params = r.u64()? as usize;
    let mut map = BTreeMap::new();
    let mut prev_name: Option<String> = None;
    for _ in 0..n_params {
        let name_len = r.u64()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| Error::CheckpointFormat("parameter name not UTF-8".into()))?;
        if prev_name.as_deref() >= Some(name.as_str()) {
            return Err(Error::CheckpointFormat(format!(
                "parameter names out of order or duplicated at {name:?}"
            )));
        }
        prev_name = Some(name.clone());
        let rows = r.u64()? as usize;
        let cols = r.u64()? as usize;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::CheckpointFormat("array size overflow".into()))?;
        let raw = r.take(n * 4)?;
        let values: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        let arr = Array2::from_shape_vec((rows, cols), values)
            .map_err(|e| Error::CheckpointFormat(e.to_string()))?;
        map.insert(name, arr);
    }
    Ok(map)
}

impl Checkpoint {
    pub fn new(meta: CheckpointMeta, params: &ParamStore) -> Self {
        Self {
            meta,
            params: quantize(params),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta_json = serde_json::to_vec(&self.meta)?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(meta_json.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta_json);
        write_array_block(&mut out, self.params.arrays());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::CheckpointFormat("bad magic".into()));
        }
        let meta_len = r.u64()? as usize;
        let meta_bytes = r.take(meta_len)?;
        let meta_value: serde_json::Value = serde_json::from_slice(meta_bytes)
            .map_err(|e| Error::CheckpointFormat(format!("metadata not valid JSON: {e}")))?;
        let found = meta_value
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::CheckpointFormat("metadata missing version field".into()))?
            as u32;
        if found != CHECKPOINT_VERSION {
            return Err(Error::CheckpointVersion {
                supported: CHECKPOINT_VERSION,
                found,
            });
        }
        let meta: CheckpointMeta = serde_json::from_value(meta_value)
            .map_err(|e| Error::CheckpointFormat(format!("bad metadata: {e}")))?;

        let map = read_array_block(&mut r)?;
        if r.at != bytes.len() {
            return Err(Error::CheckpointFormat("trailing bytes".into()));
        }
        Ok(Self {
            meta,
            params: ParamStore::from_arrays(map),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Hex SHA-256 of the archive bytes, for provenance records.
    pub fn content_hash(&self) -> Result<String> {
        let bytes = self.to_bytes()?;
        let mut h = Sha256::new();
        h.update(&bytes);
        Ok(format!("{:x}", h.finalize()))
    }
}

pub(crate) struct Reader<'a> {
    pub(crate) bytes: &'a [u8],
    pub(crate) at: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.at + n > self.bytes.len() {
            return Err(Error::CheckpointFormat("unexpected end of file".into()));
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().unwrap()))
    }
}
