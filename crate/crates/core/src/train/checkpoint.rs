//! Binary checkpoints.
//!
//! Layout (little endian):
//!
//! ```text
//! magic "QCNNCKPT" | u32 version | [u8; 32] config hash
//! u32 len + config TOML
//! u64 epochs done | f64 best dev score (NaN if none) | u64 epochs since best
//! u32 n params, then per param:
//!     u32 len + name | u8 regularized | u32 ndim | u64 dims... | f64 values...
//! u8 optimizer kind | u64 adam step | f64 first moments... | f64 second moments...
//! [u8; 32] SHA-256 of everything above
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};

use super::config::Config;
use super::optim::{OptimizerKind, OptimizerState};
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"QCNNCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: Config,
    pub epochs_done: usize,
    pub best_dev: Option<f64>,
    pub stale_epochs: usize,
    pub params: ParamStore,
    pub optimizer: OptimizerState,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Integrity("truncated".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Integrity("size overflow".into()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Integrity("invalid UTF-8".into()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Integrity("size overflow".into()))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend((s.len() as u32).to_le_bytes());
    out.extend(s.as_bytes());
}

fn put_f64s(out: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        out.extend(x.to_le_bytes());
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend(CHECKPOINT_MAGIC);
        out.extend(CHECKPOINT_VERSION.to_le_bytes());
        out.extend(self.config.hash());
        put_str(&mut out, &self.config.to_toml());
        out.extend((self.epochs_done as u64).to_le_bytes());
        out.extend(self.best_dev.unwrap_or(f64::NAN).to_le_bytes());
        out.extend((self.stale_epochs as u64).to_le_bytes());
        out.extend((self.params.len() as u32).to_le_bytes());
        for p in self.params.iter() {
            put_str(&mut out, &p.name);
            out.push(u8::from(p.regularized));
            out.extend((p.value.ndim() as u32).to_le_bytes());
            for &d in p.value.shape() {
                out.extend((d as u64).to_le_bytes());
            }
            put_f64s(&mut out, p.value.data());
        }
        out.push(self.optimizer.kind.code());
        out.extend(self.optimizer.step.to_le_bytes());
        for t in self.optimizer.m.iter().chain(&self.optimizer.v) {
            put_f64s(&mut out, t.data());
        }
        let digest = Sha256::digest(&out);
        out.extend(digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < CHECKPOINT_MAGIC.len() + 32 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(Error::Integrity("not a checkpoint file".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Integrity("checksum mismatch".into()));
        }
        let mut r = Reader { bytes: body, pos: 8 };
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Integrity(format!("unsupported version {version}")));
        }
        let hash: [u8; 32] = r.take(32)?.try_into().unwrap();
        let config = Config::from_toml(&r.string()?)?;
        if config.hash() != hash {
            return Err(Error::ConfigMismatch);
        }
        let epochs_done = r.usize()?;
        let best = r.f64()?;
        let best_dev = (!best.is_nan()).then_some(best);
        let stale_epochs = r.usize()?;
        let n = r.u32()? as usize;
        let mut params = ParamStore::new();
        for _ in 0..n {
            let name = r.string()?;
            let regularized = match r.u8()? {
                0 => false,
                1 => true,
                b => return Err(Error::Integrity(format!("bad flag {b}"))),
            };
            let ndim = r.u32()? as usize;
            let shape = (0..ndim).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
            let len = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
            let len = len.ok_or_else(|| Error::Integrity("size overflow".into()))?;
            let value = Tensor::new(&shape, r.f64s(len)?).map_err(|e| Error::Integrity(e.to_string()))?;
            params.add(name, value, regularized);
        }
        let kind = OptimizerKind::from_code(r.u8()?).ok_or_else(|| Error::Integrity("bad optimizer kind".into()))?;
        let step = r.u64()?;
        let moments = |r: &mut Reader| -> Result<Vec<Tensor>> {
            params
                .iter()
                .map(|p| Tensor::new(p.value.shape(), r.f64s(p.value.len())?))
                .collect()
        };
        let m = moments(&mut r)?;
        let v = moments(&mut r)?;
        if r.pos != body.len() {
            return Err(Error::Integrity("trailing bytes".into()));
        }
        let optimizer = OptimizerState { kind, step, m, v };
        Ok(Checkpoint { config, epochs_done, best_dev, stale_epochs, params, optimizer })
    }

    /// Writes through a temporary file and renames, so an interrupted save
    /// never leaves a truncated checkpoint behind.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes)
    }

    /// Fails with [`Error::ConfigMismatch`] unless this checkpoint was
    /// written for `config`'s architecture.
    pub fn check_config(&self, config: &Config) -> Result<()> {
        if self.config.hash() == config.hash() {
            Ok(())
        } else {
            Err(Error::ConfigMismatch)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut params = ParamStore::new();
        params.add("a", Tensor::new(&[2, 2], vec![1.0, -2.0, 0.5, 1e-300]).unwrap(), true);
        params.add("b", Tensor::new(&[3], vec![f64::MIN_POSITIVE, 0.0, -0.0]).unwrap(), false);
        let mut optimizer = OptimizerState::new(&params);
        optimizer.step = 7;
        optimizer.m[0].data_mut()[1] = 0.25;
        Checkpoint { config: Config::default(), epochs_done: 3, best_dev: Some(0.4), stale_epochs: 1, params, optimizer }
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let c = sample();
        let bytes = c.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn corruption_detected() {
        let bytes = sample().to_bytes();
        for i in [0, 9, 20, bytes.len() / 2, bytes.len() - 1] {
            let mut bad = bytes.clone();
            bad[i] ^= 0x40;
            assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Integrity(_))), "byte {i}");
        }
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 5]).is_err());
    }

    #[test]
    fn config_check() {
        let c = sample();
        let mut other = Config::default();
        other.model.feature_maps = 8;
        assert!(matches!(c.check_config(&other), Err(Error::ConfigMismatch)));
        let mut same_arch = Config::default();
        same_arch.training.adam_lr = 0.5;
        assert!(c.check_config(&same_arch).is_ok());
    }
}
