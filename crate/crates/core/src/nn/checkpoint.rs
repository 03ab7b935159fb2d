//! Flat checkpoint container.
//!
//! ```text
//! b"BRNCKPT1"                 8-byte magic
//! u64 (little endian)         JSON header length in bytes
//! JSON header                 CheckpointHeader
//! f32 (little endian) ...     tensor data, concatenated in header order
//! ```

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"BRNCKPT1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
    pub dtype: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub tensors: Vec<TensorEntry>,
    pub step: u64,
    pub tau: f64,
    pub optimizer_state: bool,
    /// Free-form configuration needed to rebuild the model.
    #[serde(default)]
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub tensors: Vec<Array2<f32>>,
}

impl Checkpoint {
    pub fn tensor(&self, name: &str) -> Option<&Array2<f32>> {
        self.header
            .tensors
            .iter()
            .position(|t| t.name == name)
            .map(|i| &self.tensors[i])
    }
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    if ckpt.header.tensors.len() != ckpt.tensors.len() {
        return Err(Error::Shape("header and tensor count differ".into()));
    }
    for (entry, t) in ckpt.header.tensors.iter().zip(&ckpt.tensors) {
        if entry.shape != [t.nrows(), t.ncols()] {
            return Err(Error::Shape(format!("tensor {} shape mismatch", entry.name)));
        }
    }
    let header = serde_json::to_vec(&ckpt.header)?;
    let mut buf = Vec::with_capacity(16 + header.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
    buf.extend_from_slice(&header);
    for t in &ckpt.tensors {
        for v in t.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::format(path, "not a checkpoint (bad magic)"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes
        .get(16..16 + hlen)
        .ok_or_else(|| Error::format(path, "truncated header"))?;
    let header: CheckpointHeader =
        serde_json::from_slice(body).map_err(|e| Error::format(path, e.to_string()))?;
    let mut cursor = 16 + hlen;
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for entry in &header.tensors {
        if entry.dtype != "f32" {
            return Err(Error::format(path, format!("unsupported dtype {}", entry.dtype)));
        }
        let count = entry.shape[0] * entry.shape[1];
        let raw = bytes
            .get(cursor..cursor + 4 * count)
            .ok_or_else(|| Error::format(path, format!("truncated tensor {}", entry.name)))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        tensors.push(
            Array2::from_shape_vec((entry.shape[0], entry.shape[1]), data)
                .map_err(|e| Error::format(path, e.to_string()))?,
        );
        cursor += 4 * count;
    }
    if cursor != bytes.len() {
        return Err(Error::format(path, "trailing bytes after last tensor"));
    }
    Ok(Checkpoint { header, tensors })
}
