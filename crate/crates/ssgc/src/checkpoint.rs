//! Binary parameter/mask persistence.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      4 bytes  "SSGC"
//! version    1 byte
//! digest    32 bytes  SHA-256 of the model spec JSON
//! blocks     4 bytes  u32 block count
//! per block: weights_len u64, exempt_len u64
//! per block: weights f64*, exempt f64*
//! mask flag  1 byte   0 = absent, 1 = present
//! per block: weight keep-mask, 1 bit per weight LSB-first, padded to byte
//! ```
//!
//! Writes go to a temporary file in the target directory and are renamed
//! into place, so a crash never leaves a half-written checkpoint.

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::nn::{ModelSpec, ParamBlock, ParamSet};

pub const MAGIC: &[u8; 4] = b"SSGC";
pub const VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic: not a checkpoint file")]
    BadMagic,
    #[error("version mismatch: file has {found}, expected {expected}")]
    VersionMismatch { found: u8, expected: u8 },
    #[error("model digest mismatch: checkpoint was written for a different model spec")]
    DigestMismatch,
    #[error("truncated or corrupt checkpoint while reading {field}")]
    Truncated { field: &'static str },
    #[error("mask length {got} does not match block count {expected}")]
    MaskShape { expected: usize, got: usize },
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize, field: &'static str) -> Result<&'a [u8], CheckpointError> {
        if self.pos + len > self.buf.len() {
            return Err(CheckpointError::Truncated { field });
        }
        let slice = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(slice)
    }

    fn u8(&mut self, field: &'static str) -> Result<u8, CheckpointError> {
        Ok(self.take(1, field)?[0])
    }

    fn u32(&mut self, field: &'static str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }

    fn u64(&mut self, field: &'static str) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8, field)?.try_into().unwrap()))
    }

    fn f64_vec(&mut self, len: usize, field: &'static str) -> Result<Vec<f64>, CheckpointError> {
        let bytes = self.take(len * 8, field)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

fn pack_mask(mask: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; mask.len().div_ceil(8)];
    for (i, &keep) in mask.iter().enumerate() {
        if keep {
            out[i / 8] |= 1 << (i % 8);
        }
    }
    out
}

fn unpack_mask(bytes: &[u8], len: usize) -> Vec<bool> {
    (0..len).map(|i| bytes[i / 8] & (1 << (i % 8)) != 0).collect()
}

/// Serialize parameters (and optional per-block weight masks) atomically.
pub fn save_checkpoint(
    path: &Path,
    spec: &ModelSpec,
    params: &ParamSet,
    masks: Option<&[Vec<bool>]>,
) -> Result<(), CheckpointError> {
    if let Some(m) = masks {
        if m.len() != params.blocks.len() {
            return Err(CheckpointError::MaskShape {
                expected: params.blocks.len(),
                got: m.len(),
            });
        }
    }
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.push(VERSION);
    buf.extend_from_slice(&spec.digest());
    buf.extend_from_slice(&(params.blocks.len() as u32).to_le_bytes());
    for block in &params.blocks {
        buf.extend_from_slice(&(block.weights.len() as u64).to_le_bytes());
        buf.extend_from_slice(&(block.exempt.len() as u64).to_le_bytes());
    }
    for block in &params.blocks {
        for v in block.weights.iter().chain(&block.exempt) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    match masks {
        None => buf.push(0),
        Some(masks) => {
            buf.push(1);
            for mask in masks {
                buf.extend_from_slice(&pack_mask(mask));
            }
        }
    }

    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let io_err = |source: std::io::Error| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    };
    fs::create_dir_all(dir).map_err(io_err)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(&buf).map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

/// Load a checkpoint written for exactly this model spec.
pub fn load_checkpoint(
    path: &Path,
    spec: &ModelSpec,
) -> Result<(ParamSet, Option<Vec<Vec<bool>>>), CheckpointError> {
    let buf = fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut r = Reader { buf: &buf, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u8("version")?;
    if version != VERSION {
        return Err(CheckpointError::VersionMismatch {
            found: version,
            expected: VERSION,
        });
    }
    if r.take(32, "digest")? != spec.digest() {
        return Err(CheckpointError::DigestMismatch);
    }
    let block_count = r.u32("block count")? as usize;
    let mut shapes = Vec::with_capacity(block_count);
    for _ in 0..block_count {
        let w = r.u64("weights length")? as usize;
        let e = r.u64("exempt length")? as usize;
        shapes.push((w, e));
    }
    let mut blocks = Vec::with_capacity(block_count);
    for &(w, e) in &shapes {
        blocks.push(ParamBlock {
            weights: r.f64_vec(w, "weights data")?,
            exempt: r.f64_vec(e, "exempt data")?,
        });
    }
    let mask_flag = r.u8("mask flag")?;
    let masks = match mask_flag {
        0 => None,
        1 => {
            let mut masks = Vec::with_capacity(block_count);
            for &(w, _) in &shapes {
                let bytes = r.take(w.div_ceil(8), "mask bitmap")?;
                masks.push(unpack_mask(bytes, w));
            }
            Some(masks)
        }
        _ => return Err(CheckpointError::Truncated { field: "mask flag" }),
    };
    if r.pos != buf.len() {
        return Err(CheckpointError::Truncated {
            field: "trailing bytes",
        });
    }
    Ok((ParamSet { blocks }, masks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_params(spec: &ModelSpec, seed: u64) -> ParamSet {
        let mut params = spec.init_params(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for b in params.blocks.iter_mut() {
            for v in b.weights.iter_mut().chain(b.exempt.iter_mut()) {
                *v = rng.gen_range(-2.0..2.0);
            }
        }
        params
    }

    #[test]
    fn round_trip_is_bitwise_identity() {
        let spec = ModelSpec::ssgcnet(64, 2);
        let params = random_params(&spec, 3);
        let masks: Vec<Vec<bool>> = params
            .blocks
            .iter()
            .map(|b| b.weights.iter().map(|w| *w > 0.0).collect())
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&path, &spec, &params, Some(&masks)).unwrap();
        let (loaded, loaded_masks) = load_checkpoint(&path, &spec).unwrap();
        assert_eq!(loaded, params);
        assert_eq!(loaded_masks.as_deref(), Some(&masks[..]));
    }

    #[test]
    fn round_trip_without_masks() {
        let spec = ModelSpec::mlp(32, 2);
        let params = random_params(&spec, 5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plain.ckpt");
        save_checkpoint(&path, &spec, &params, None).unwrap();
        let (loaded, masks) = load_checkpoint(&path, &spec).unwrap();
        assert_eq!(loaded, params);
        assert!(masks.is_none());
    }

    #[test]
    fn corrupt_version_byte_is_named() {
        let spec = ModelSpec::mlp(32, 2);
        let params = random_params(&spec, 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.ckpt");
        save_checkpoint(&path, &spec, &params, None).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[4] = 99;
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_checkpoint(&path, &spec),
            Err(CheckpointError::VersionMismatch {
                found: 99,
                expected: 1
            })
        ));
    }

    #[test]
    fn digest_mismatch_is_detected() {
        let spec = ModelSpec::mlp(32, 2);
        let params = random_params(&spec, 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.ckpt");
        save_checkpoint(&path, &spec, &params, None).unwrap();
        let other = ModelSpec::mlp(64, 2);
        assert!(matches!(
            load_checkpoint(&path, &other),
            Err(CheckpointError::DigestMismatch)
        ));
    }

    #[test]
    fn truncated_file_names_the_field() {
        let spec = ModelSpec::mlp(32, 2);
        let params = random_params(&spec, 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ckpt");
        save_checkpoint(&path, &spec, &params, None).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        match load_checkpoint(&path, &spec) {
            Err(CheckpointError::Truncated { field }) => {
                assert_eq!(field, "weights data");
            }
            other => panic!("expected truncation, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        fs::write(&path, b"NOPE.....").unwrap();
        let spec = ModelSpec::mlp(32, 2);
        assert!(matches!(
            load_checkpoint(&path, &spec),
            Err(CheckpointError::BadMagic)
        ));
    }
}
