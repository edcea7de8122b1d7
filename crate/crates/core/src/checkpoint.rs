//! Binary parameter container.
//!
//! Layout (all integers little-endian): magic `LGPT`, `u32` version,
//! `u32` entry count, then per entry `u32` path length, UTF-8 path,
//! `u8` dtype code (0 = f32, 1 = f64), `u32` ndim, `u32` dims, raw
//! values; a trailing CRC32 covers every preceding byte.

use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::fnv1a_bytes;
use crate::tensor::{Element, NamedParamStore, Tensor};

pub const CKPT_MAGIC: &[u8; 4] = b"LGPT";
pub const CKPT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointEntry<T: Element> {
    pub path: String,
    pub shape: Vec<usize>,
    pub values: Vec<T>,
}

/// Plain-data snapshot of a parameter store. Unlike the store it is
/// `Send`, so runs on different threads can exchange weights.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Checkpoint<T: Element> {
    pub entries: Vec<CheckpointEntry<T>>,
}

impl<T: Element> Checkpoint<T> {
    pub fn from_store(store: &NamedParamStore<T>) -> Self {
        Self {
            entries: store
                .iter()
                .map(|(p, t)| CheckpointEntry {
                    path: p.to_string(),
                    shape: t.shape().to_vec(),
                    values: t.to_vec(),
                })
                .collect(),
        }
    }

    /// Rebuilds a store; `trainable(path)` decides which leaves require
    /// gradients.
    pub fn to_store_with(&self, trainable: impl Fn(&str) -> bool) -> Result<NamedParamStore<T>> {
        let mut s = NamedParamStore::new();
        for e in &self.entries {
            let t = if trainable(&e.path) {
                Tensor::parameter(&e.shape, e.values.clone())?
            } else {
                Tensor::from_vec(&e.shape, e.values.clone())?
            };
            s.insert(e.path.clone(), t)?;
        }
        Ok(s)
    }

    pub fn to_store(&self, requires_grad: bool) -> Result<NamedParamStore<T>> {
        self.to_store_with(|_| requires_grad)
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.path.as_str())
    }

    pub fn get(&self, path: &str) -> Option<&CheckpointEntry<T>> {
        self.entries.iter().find(|e| e.path == path)
    }

    /// Entries whose path lies under one of `prefixes`.
    pub fn subset(&self, prefixes: &[&str]) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .filter(|e| prefixes.iter().any(|p| crate::tensor::prefix_matches(&e.path, p)))
                .cloned()
                .collect(),
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.values.len()).sum()
    }

    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.to_bytes() == other.to_bytes()
    }

    /// FNV-1a hash of the serialized bytes.
    pub fn content_hash(&self) -> u64 {
        fnv1a_bytes(&self.to_bytes())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.num_scalars() * T::byte_width());
        out.extend_from_slice(CKPT_MAGIC);
        out.extend_from_slice(&CKPT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&(e.path.len() as u32).to_le_bytes());
            out.extend_from_slice(e.path.as_bytes());
            out.push(T::DTYPE_CODE);
            out.extend_from_slice(&(e.shape.len() as u32).to_le_bytes());
            for &d in &e.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in &e.values {
                v.to_le_bytes_vec(&mut out);
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 {
            return Err(Error::Checkpoint("file too short".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        let actual = crc32fast::hash(body);
        if stored != actual {
            return Err(Error::Checkpoint(format!(
                "CRC mismatch: stored {stored:08x}, computed {actual:08x}"
            )));
        }
        let mut r = Reader { buf: body, pos: 0 };
        if r.take(4)? != CKPT_MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != CKPT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let count = r.u32()? as usize;
        let mut entries = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let len = r.u32()? as usize;
            let path = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Checkpoint("path is not UTF-8".into()))?
                .to_string();
            let code = r.take(1)?[0];
            if code != T::DTYPE_CODE {
                return Err(Error::Checkpoint(format!(
                    "{path}: dtype code {code}, expected {} ({})",
                    T::DTYPE_CODE,
                    T::NAME
                )));
            }
            let ndim = r.u32()? as usize;
            let mut shape = Vec::with_capacity(ndim.min(8));
            for _ in 0..ndim {
                shape.push(r.u32()? as usize);
            }
            let n: usize = shape.iter().product();
            let w = T::byte_width();
            let raw = r.take(n.checked_mul(w).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
            let values = raw.chunks_exact(w).map(T::from_le_slice).collect();
            entries.push(CheckpointEntry { path, shape, values });
        }
        if r.pos != body.len() {
            return Err(Error::Checkpoint("trailing bytes after last entry".into()));
        }
        Ok(Self { entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Checkpoint<f32> {
        Checkpoint {
            entries: vec![
                CheckpointEntry { path: "a.weight".into(), shape: vec![2, 3], values: vec![1.0, -2.0, 3.5, 0.0, -0.0, 7.0] },
                CheckpointEntry { path: "b".into(), shape: vec![1], values: vec![f32::MIN_POSITIVE] },
            ],
        }
    }

    #[test]
    fn layout_starts_with_magic_and_version() {
        let b = sample().to_bytes();
        assert_eq!(&b[..4], b"LGPT");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 2);
    }

    #[test]
    fn every_single_bit_flip_is_detected() {
        let b = sample().to_bytes();
        for byte in 0..b.len() {
            for bit in 0..8 {
                let mut c = b.clone();
                c[byte] ^= 1 << bit;
                assert!(Checkpoint::<f32>::from_bytes(&c).is_err(), "flip at {byte}:{bit}");
            }
        }
    }

    #[test]
    fn dtype_mismatch_and_truncation_error() {
        let b = sample().to_bytes();
        assert!(Checkpoint::<f64>::from_bytes(&b).is_err());
        assert!(Checkpoint::<f32>::from_bytes(&b[..b.len() - 5]).is_err());
    }

    #[test]
    fn store_round_trip() {
        let c = sample();
        let s = c.to_store(true).unwrap();
        assert!(s.get("a.weight").unwrap().requires_grad());
        assert!(Checkpoint::from_store(&s).bitwise_eq(&c));
        let frozen = c.to_store_with(|p| p != "b").unwrap();
        assert!(!frozen.get("b").unwrap().requires_grad());
        assert_eq!(c.subset(&["a"]).entries.len(), 1);
    }

    proptest! {
        #[test]
        fn bytes_round_trip(
            shapes in proptest::collection::vec(proptest::collection::vec(1usize..4, 0..3), 0..5),
            seed in any::<u64>(),
        ) {
            use rand::Rng;
            let mut r = crate::rng::stream(seed, &[]);
            let c = Checkpoint::<f64> {
                entries: shapes.iter().enumerate().map(|(i, s)| CheckpointEntry {
                    path: format!("p{i}.w"),
                    shape: s.clone(),
                    values: (0..s.iter().product::<usize>()).map(|_| f64::from_bits(r.gen())).collect(),
                }).collect(),
            };
            let back = Checkpoint::<f64>::from_bytes(&c.to_bytes()).unwrap();
            prop_assert_eq!(back.to_bytes(), c.to_bytes());
        }
    }
}
