use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, Array3};

use crate::error::{AecError, Result};
use crate::signal::LogMelFrames;

pub const SHARD_MAGIC: &[u8; 4] = b"AECF";
pub const SHARD_VERSION: u32 = 1;

/// T×M×2 model input: channel 0 is the probe, channel 1 the reference.
pub fn stack_inputs(probe: &LogMelFrames, reference: &LogMelFrames) -> Result<Array3<f32>> {
    stack_channels(&[&probe.frames, &reference.frames])
}

pub fn stack_channels(channels: &[&Array2<f32>]) -> Result<Array3<f32>> {
    let Some(first) = channels.first() else {
        return Err(AecError::ShapeMismatch("no channels to stack".into()));
    };
    let (t, m) = first.dim();
    for c in channels {
        if c.dim() != (t, m) {
            return Err(AecError::ShapeMismatch(format!(
                "cannot stack {t}x{m} with {}x{}",
                c.nrows(),
                c.ncols()
            )));
        }
    }
    Ok(Array3::from_shape_fn((t, m, channels.len()), |(i, j, k)| channels[k][[i, j]]))
}

pub fn unstack(stacked: &Array3<f32>) -> Vec<Array2<f32>> {
    (0..stacked.dim().2)
        .map(|k| stacked.index_axis(ndarray::Axis(2), k).to_owned())
        .collect()
}

/// Writes a T×M×C tensor as an `AECF` shard.
pub fn write_shard(path: &Path, tensor: &Array3<f32>) -> Result<()> {
    let (t, m, c) = tensor.dim();
    let mut bytes = Vec::with_capacity(20 + 4 * tensor.len());
    bytes.extend_from_slice(SHARD_MAGIC);
    for v in [SHARD_VERSION, t as u32, m as u32, c as u32] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    for v in tensor.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(|e| AecError::io(path, e))?;
    f.write_all(&bytes).map_err(|e| AecError::io(path, e))
}

pub fn read_shard(path: &Path) -> Result<Array3<f32>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| AecError::io(path, e))?;
    if bytes.len() < 20 || &bytes[..4] != SHARD_MAGIC {
        return Err(AecError::format(path, "not an AECF feature shard"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    if word(0) as u32 != SHARD_VERSION {
        return Err(AecError::format(path, format!("unsupported shard version {}", word(0))));
    }
    let (t, m, c) = (word(1), word(2), word(3));
    let body = &bytes[20..];
    if body.len() != 4 * t * m * c {
        return Err(AecError::format(
            path,
            format!("expected {} payload bytes, found {}", 4 * t * m * c, body.len()),
        ));
    }
    let data: Vec<f32> = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Array3::from_shape_vec((t, m, c), data).map_err(|e| AecError::format(path, e.to_string()))
}
