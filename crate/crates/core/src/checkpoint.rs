//! Binary container shared by every trained artifact.
//!
//! Layout: 4-byte magic, u32 version, u64 JSON length, the JSON blob, then
//! one record per tensor: u32 name length, UTF-8 name, u32 rank, u64 dims,
//! row-major little-endian f32 data. All integers are little-endian.

use std::path::Path;

use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::autodiff::ParamStore;
use crate::error::{AecError, Result};

pub const VERSION: u32 = 1;
pub const NEURAL_MAGIC: [u8; 4] = *b"NAEC";
pub const PROXY_MAGIC: [u8; 4] = *b"PRXY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Envelope<M> {
    kind: String,
    tensor_count: usize,
    meta: M,
}

pub fn encode<M: Serialize>(magic: [u8; 4], kind: &str, meta: &M, tensors: &ParamStore<f32>) -> Vec<u8> {
    let envelope = Envelope {
        kind: kind.to_string(),
        tensor_count: tensors.len(),
        meta,
    };
    let json = serde_json::to_vec(&envelope).expect("metadata serializes");
    let mut out = Vec::with_capacity(16 + json.len() + 4 * tensors.num_scalars());
    out.extend_from_slice(&magic);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (name, t) in tensors.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&2u32.to_le_bytes());
        out.extend_from_slice(&(t.nrows() as u64).to_le_bytes());
        out.extend_from_slice(&(t.ncols() as u64).to_le_bytes());
        for v in t.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| AecError::CorruptCheckpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Decodes a container, checking magic, version and `kind`.
pub fn decode<M: DeserializeOwned>(bytes: &[u8], magic: [u8; 4], kind: &str) -> Result<(M, ParamStore<f32>)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != magic {
        return Err(AecError::CorruptCheckpoint(format!(
            "bad magic, expected {}",
            String::from_utf8_lossy(&magic)
        )));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(AecError::CorruptCheckpoint(format!("unsupported version {version}")));
    }
    let len = r.u64()? as usize;
    let envelope: Envelope<M> = serde_json::from_slice(r.take(len)?)
        .map_err(|e| AecError::CorruptCheckpoint(format!("metadata: {e}")))?;
    if envelope.kind != kind {
        return Err(AecError::CorruptCheckpoint(format!(
            "expected a {kind} checkpoint, found {}",
            envelope.kind
        )));
    }
    let mut tensors = ParamStore::new();
    for _ in 0..envelope.tensor_count {
        let n = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(n)?)
            .map_err(|_| AecError::CorruptCheckpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32()? as usize;
        if rank != 2 {
            return Err(AecError::CorruptCheckpoint(format!("tensor {name} has rank {rank}")));
        }
        let rows = r.u64()? as usize;
        let cols = r.u64()? as usize;
        let count = rows
            .checked_mul(cols)
            .ok_or_else(|| AecError::CorruptCheckpoint(format!("tensor {name} is too large")))?;
        let data = r.take(count.checked_mul(4).ok_or_else(|| AecError::CorruptCheckpoint("overflow".into()))?)?;
        let values: Vec<f32> = data.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        tensors.insert(name, Array2::from_shape_vec((rows, cols), values).expect("shape matches count"));
    }
    if r.pos != bytes.len() {
        return Err(AecError::CorruptCheckpoint("trailing bytes".into()));
    }
    Ok((envelope.meta, tensors))
}

pub fn save<M: Serialize>(path: &Path, magic: [u8; 4], kind: &str, meta: &M, tensors: &ParamStore<f32>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| AecError::io(dir, e))?;
    }
    std::fs::write(path, encode(magic, kind, meta, tensors)).map_err(|e| AecError::io(path, e))
}

/// Loads a container. A missing file is reported as I/O; anything
/// unreadable inside it as `CorruptCheckpoint`.
pub fn load<M: DeserializeOwned>(path: &Path, magic: [u8; 4], kind: &str) -> Result<(M, ParamStore<f32>)> {
    let bytes = std::fs::read(path).map_err(|e| AecError::io(path, e))?;
    decode(&bytes, magic, kind)
}
