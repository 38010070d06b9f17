//! Binary checkpoint format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic  b"DSNB"
//! u32    format version (currently 1)
//! u32    entry count
//! entry* name_len: u32, name bytes (UTF-8),
//!        dtype code: u8 (0 = f32, 1 = f64, 2 = u8),
//!        rank: u8, dims: u64 * rank,
//!        payload: row-major little-endian values
//! [32]   SHA-256 digest of the `__config__` entry payload
//! ```
//!
//! Entry names are unique; `load(save(x))` is bit-identical.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scalar::{Dtype, Scalar};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"DSNB";
pub const VERSION: u32 = 1;

/// Reserved entry name holding the canonical run-config text.
pub const CONFIG_ENTRY: &str = "__config__";

#[derive(Debug, Clone, PartialEq)]
pub struct CkptEntry {
    pub name: String,
    pub dtype: Dtype,
    pub dims: Vec<usize>,
    pub payload: Vec<u8>,
}

impl CkptEntry {
    pub fn from_tensor<E: Scalar>(name: impl Into<String>, t: &Tensor<E>) -> Self {
        let mut payload = Vec::with_capacity(t.numel() * E::DTYPE.size_bytes());
        for v in t.data() {
            payload.extend_from_slice(&v.to_le_bytes_vec());
        }
        CkptEntry {
            name: name.into(),
            dtype: E::DTYPE,
            dims: t.shape().to_vec(),
            payload,
        }
    }

    pub fn from_text(name: impl Into<String>, text: &str) -> Self {
        CkptEntry {
            name: name.into(),
            dtype: Dtype::U8,
            dims: vec![text.len()],
            payload: text.as_bytes().to_vec(),
        }
    }

    pub fn to_tensor<E: Scalar>(&self) -> Result<Tensor<E>> {
        if self.dtype != E::DTYPE {
            return Err(Error::format(
                "checkpoint",
                format!("entry {} has dtype {:?}, expected {:?}", self.name, self.dtype, E::DTYPE),
            ));
        }
        let size = self.dtype.size_bytes();
        let data: Vec<E> = self.payload.chunks_exact(size).map(E::from_le_slice).collect();
        Tensor::new(self.dims.clone(), data)
    }

    pub fn text(&self) -> Result<String> {
        if self.dtype != Dtype::U8 {
            return Err(Error::format(
                "checkpoint",
                format!("entry {} is not a text entry", self.name),
            ));
        }
        String::from_utf8(self.payload.clone())
            .map_err(|_| Error::format("checkpoint", format!("entry {} is not UTF-8", self.name)))
    }

    fn numel(&self) -> usize {
        self.dims.iter().product()
    }
}

/// An ordered collection of uniquely named entries.
#[derive(Debug, Default, Clone)]
pub struct Checkpoint {
    entries: Vec<CkptEntry>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Checkpoint { entries: Vec::new() }
    }

    pub fn push(&mut self, entry: CkptEntry) -> Result<()> {
        if self.get(&entry.name).is_some() {
            return Err(Error::format(
                "checkpoint",
                format!("duplicate entry name {}", entry.name),
            ));
        }
        if entry.payload.len() != entry.numel() * entry.dtype.size_bytes() {
            return Err(Error::format(
                "checkpoint",
                format!(
                    "entry {}: payload {} bytes, dims {:?} require {}",
                    entry.name,
                    entry.payload.len(),
                    entry.dims,
                    entry.numel() * entry.dtype.size_bytes()
                ),
            ));
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&CkptEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn entries(&self) -> &[CkptEntry] {
        &self.entries
    }

    pub fn config_text(&self) -> Result<String> {
        self.get(CONFIG_ENTRY)
            .ok_or_else(|| Error::format("checkpoint", "missing __config__ entry"))?
            .text()
    }

    fn config_digest(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        if let Some(cfg) = self.get(CONFIG_ENTRY) {
            hasher.update(&cfg.payload);
        }
        hasher.finalize().into()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.push(e.dtype.code());
            out.push(e.dims.len() as u8);
            for d in &e.dims {
                out.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            out.extend_from_slice(&e.payload);
        }
        out.extend_from_slice(&self.config_digest());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |reason: String| Error::format("checkpoint", reason);
        let mut pos = 0usize;
        let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
            if *pos + n > bytes.len() {
                return Err(bad("truncated checkpoint".into()));
            }
            let s = &bytes[*pos..*pos + n];
            *pos += n;
            Ok(s)
        };

        if take(&mut pos, 4)? != MAGIC {
            return Err(bad("bad magic".into()));
        }
        let version = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let count = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let mut ckpt = Checkpoint::new();
        for _ in 0..count {
            let name_len = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
            let name = String::from_utf8(take(&mut pos, name_len)?.to_vec())
                .map_err(|_| bad("entry name is not UTF-8".into()))?;
            let dtype = Dtype::from_code(take(&mut pos, 1)?[0])
                .ok_or_else(|| bad(format!("unknown dtype code in {name}")))?;
            let rank = take(&mut pos, 1)?[0] as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()) as usize);
            }
            let payload_len = dims.iter().product::<usize>() * dtype.size_bytes();
            let payload = take(&mut pos, payload_len)?.to_vec();
            ckpt.push(CkptEntry { name, dtype, dims, payload })?;
        }
        let digest: [u8; 32] = take(&mut pos, 32)?
            .try_into()
            .map_err(|_| bad("missing trailing digest".into()))?;
        if pos != bytes.len() {
            return Err(bad("trailing garbage after digest".into()));
        }
        if digest != ckpt.config_digest() {
            return Err(bad("config digest mismatch".into()));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut ckpt = Checkpoint::new();
        ckpt.push(CkptEntry::from_text(CONFIG_ENTRY, "seed = 1\n")).unwrap();
        let t32 = Tensor::<f32>::from_fn(vec![2, 3], |i| i as f32 * 0.5 - 1.0);
        let t64 = Tensor::<f64>::from_fn(vec![4], |i| (i as f64).sin());
        ckpt.push(CkptEntry::from_tensor("weights.a", &t32)).unwrap();
        ckpt.push(CkptEntry::from_tensor("weights.b", &t64)).unwrap();
        ckpt
    }

    #[test]
    fn round_trip_is_bit_identical_for_every_dtype() {
        let ckpt = sample();
        let bytes = ckpt.to_bytes();
        let loaded = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(loaded.to_bytes(), bytes);
        let t32: Tensor<f32> = loaded.get("weights.a").unwrap().to_tensor().unwrap();
        assert_eq!(t32.shape(), &[2, 3]);
        let orig: Tensor<f32> = ckpt.get("weights.a").unwrap().to_tensor().unwrap();
        assert_eq!(t32.data(), orig.data());
        assert_eq!(loaded.config_text().unwrap(), "seed = 1\n");
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut ckpt = Checkpoint::new();
        ckpt.push(CkptEntry::from_text("x", "a")).unwrap();
        assert!(ckpt.push(CkptEntry::from_text("x", "b")).is_err());
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = sample().to_bytes();
        // flip one payload byte: digest stays valid only for config changes,
        // so corrupt the config region to trip the digest check
        let mut tampered = bytes.clone();
        let cfg_pos = bytes.windows(4).position(|w| w == b"seed").unwrap();
        tampered[cfg_pos] ^= 0xff;
        assert!(Checkpoint::from_bytes(&tampered).is_err());
        // truncation
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 5]).is_err());
        // bad magic
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
    }

    #[test]
    fn dtype_mismatch_on_read_is_an_error() {
        let ckpt = sample();
        let entry = ckpt.get("weights.a").unwrap();
        assert!(entry.to_tensor::<f64>().is_err());
        assert!(entry.to_tensor::<f32>().is_ok());
    }
}
