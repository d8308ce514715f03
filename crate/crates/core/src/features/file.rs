//! Binary feature files.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 8     | magic `QCNNFEAT` |
//! | 4     | format version (`u32`, currently 1) |
//! | 4     | frame count (`u32`) |
//! | 4     | feature width (`u32`) |
//! | 3·W·F·4 | `f32` values: static, delta, delta-delta streams in turn, each row-major `[width, frames]` |

use std::path::Path;

use super::FeatureSequence;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const FEATURE_MAGIC: &[u8; 8] = b"QCNNFEAT";
pub const FEATURE_VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

pub fn encode_features(seq: &FeatureSequence) -> Vec<u8> {
    let (s, d, dd) = seq.unpack();
    let mut out = Vec::with_capacity(HEADER_LEN + 12 * s.len());
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    out.extend_from_slice(&(seq.n_frames() as u32).to_le_bytes());
    out.extend_from_slice(&(seq.width() as u32).to_le_bytes());
    for stream in [&s, &d, &dd] {
        for &v in stream.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureSequence> {
    let bad = |detail: String| Error::Format { what: "feature file", detail };
    if bytes.len() < HEADER_LEN || &bytes[..8] != FEATURE_MAGIC {
        return Err(bad("missing magic header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let version = word(8);
    if version != FEATURE_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let (frames, width) = (word(12) as usize, word(16) as usize);
    let n = frames * width;
    if bytes.len() != HEADER_LEN + 12 * n {
        return Err(bad(format!(
            "{} payload bytes for {width}×{frames}×3 values",
            bytes.len() - HEADER_LEN
        )));
    }
    let values: Vec<f64> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    let stream = |k: usize| Tensor::new(&[width, frames], values[k * n..(k + 1) * n].to_vec());
    FeatureSequence::pack(&stream(0)?, &stream(1)?, &stream(2)?)
}

pub fn write_features(path: &Path, seq: &FeatureSequence) -> Result<()> {
    std::fs::write(path, encode_features(seq)).map_err(|e| Error::io(path, e))
}

pub fn read_features(path: &Path) -> Result<FeatureSequence> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features(&bytes)
}
