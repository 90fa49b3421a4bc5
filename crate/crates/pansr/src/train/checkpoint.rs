//! Checkpoint container: named f32 tensors plus string metadata in one
//! self-describing binary file.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "PANCKPT\x01"
//! version  u32      format version (see [`FORMAT_VERSION`])
//! meta     u32 count, then (key_len u32, key, val_len u32, val) pairs
//! tensors  u32 count, then (name_len u32, name, rank u32, dims u64 x rank,
//!                           f32 data)
//! sha256   32 bytes over everything above
//! ```
//!
//! The trailing digest makes loads all-or-nothing: a corrupt or truncated
//! file fails the checksum before anything is handed to the caller, and a
//! version bump is refused naming both versions.

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{PanError, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"PANCKPT\x01";
pub const FORMAT_VERSION: u32 = 1;

/// In-memory checkpoint: metadata strings (topology, counters, config hash)
/// plus every named tensor (parameters and optimizer moments).
#[derive(Debug, Default)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub tensors: BTreeMap<String, Tensor<f32>>,
}

impl Checkpoint {
    pub fn meta_usize(&self, key: &str) -> Result<usize> {
        self.meta
            .get(key)
            .ok_or_else(|| PanError::Data(format!("checkpoint is missing meta key '{key}'")))?
            .parse()
            .map_err(|_| PanError::Data(format!("checkpoint meta '{key}' is not an integer")))
    }

    pub fn meta_u64(&self, key: &str) -> Result<u64> {
        self.meta
            .get(key)
            .ok_or_else(|| PanError::Data(format!("checkpoint is missing meta key '{key}'")))?
            .parse()
            .map_err(|_| PanError::Data(format!("checkpoint meta '{key}' is not an integer")))
    }

    pub fn meta_str(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(|s| s.as_str())
            .ok_or_else(|| PanError::Data(format!("checkpoint is missing meta key '{key}'")))
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor<f32>> {
        self.tensors
            .get(name)
            .ok_or_else(|| PanError::Data(format!("checkpoint is missing tensor '{name}'")))
    }

    /// Serialize and write atomically-enough: the digest is computed over
    /// the full payload before anything touches disk.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        push_u32(&mut buf, self.meta.len() as u32);
        for (k, v) in &self.meta {
            push_str(&mut buf, k);
            push_str(&mut buf, v);
        }
        push_u32(&mut buf, self.tensors.len() as u32);
        for (name, t) in &self.tensors {
            push_str(&mut buf, name);
            push_u32(&mut buf, t.rank() as u32);
            for &d in t.shape() {
                buf.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&buf);
        buf.extend_from_slice(&digest);
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        std::fs::write(path, buf)?;
        Ok(())
    }

    /// Read and verify a checkpoint. Fails without partial state on a bad
    /// magic, a version mismatch (naming both versions), or a checksum
    /// mismatch.
    pub fn load(path: &Path) -> Result<Checkpoint> {
        let buf = std::fs::read(path)
            .map_err(|e| PanError::Data(format!("cannot read checkpoint {}: {e}", path.display())))?;
        if buf.len() < MAGIC.len() + 4 + 32 {
            return Err(PanError::Data(format!(
                "checkpoint {} is truncated ({} bytes)",
                path.display(),
                buf.len()
            )));
        }
        let (payload, digest) = buf.split_at(buf.len() - 32);
        if payload[..8] != MAGIC[..] {
            return Err(PanError::Data(format!(
                "{} is not a checkpoint file (bad magic)",
                path.display()
            )));
        }
        let version = u32::from_le_bytes(payload[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(PanError::Data(format!(
                "checkpoint {} has format version {version}, this build reads version {FORMAT_VERSION}",
                path.display()
            )));
        }
        let computed = Sha256::digest(payload);
        if computed[..] != digest[..] {
            return Err(PanError::Data(format!(
                "checkpoint {} failed its checksum; refusing partial load",
                path.display()
            )));
        }

        let mut r = Reader { buf: payload, pos: 12 };
        let mut meta = BTreeMap::new();
        let n_meta = r.u32()?;
        for _ in 0..n_meta {
            let k = r.string()?;
            let v = r.string()?;
            meta.insert(k, v);
        }
        let mut tensors = BTreeMap::new();
        let n_tensors = r.u32()?;
        for _ in 0..n_tensors {
            let name = r.string()?;
            let rank = r.u32()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u64()? as usize);
            }
            let count: usize = shape.iter().product();
            let mut data = Vec::with_capacity(count);
            for _ in 0..count {
                data.push(f32::from_le_bytes(r.bytes(4)?.try_into().unwrap()));
            }
            tensors.insert(name, Tensor::new_unchecked(shape, data));
        }
        if r.pos != payload.len() {
            return Err(PanError::Data(format!(
                "checkpoint {} has {} trailing bytes",
                path.display(),
                payload.len() - r.pos
            )));
        }
        Ok(Checkpoint { meta, tensors })
    }
}

fn push_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn push_str(buf: &mut Vec<u8>, s: &str) {
    push_u32(buf, s.len() as u32);
    buf.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(PanError::Data("checkpoint payload ends mid-record".into()));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let raw = self.bytes(len)?;
        String::from_utf8(raw.to_vec()).map_err(|_| PanError::Data("checkpoint string is not UTF-8".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut c = Checkpoint::default();
        c.meta.insert("mode".into(), "gan".into());
        c.meta.insert("global_iter".into(), "123".into());
        c.tensors.insert(
            "g.mid4.w".into(),
            crate::tensor::rand_uniform::<f32>(&[4, 4, 3, 3], -1.0, 1.0, 1),
        );
        c.tensors.insert("g.mid4.b".into(), Tensor::zeros(&[4]));
        c.tensors.insert("scalar".into(), Tensor::scalar(2.5f32));
        c
    }

    #[test]
    fn save_load_round_trips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        let c = sample();
        c.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.meta, c.meta);
        assert_eq!(back.tensors.len(), 3);
        for (name, t) in &c.tensors {
            let b = back.tensor(name).unwrap();
            assert_eq!(b.shape(), t.shape());
            assert_eq!(b.data(), t.data());
        }
        assert_eq!(back.meta_u64("global_iter").unwrap(), 123);
        assert!(back.meta_usize("mode").is_err());
        assert!(back.tensor("missing").is_err());
    }

    #[test]
    fn corrupt_files_fail_the_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        sample().save(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        std::fs::write(&path, &bytes).unwrap();
        let err = Checkpoint::load(&path).err().unwrap();
        assert!(err.to_string().contains("checksum"), "{err}");

        // Truncation is also caught.
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 40]).unwrap();
        assert!(Checkpoint::load(&path).is_err());
    }

    #[test]
    fn version_mismatch_names_both_versions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        sample().save(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[8..12].copy_from_slice(&7u32.to_le_bytes());
        // Re-seal so only the version check can fire.
        let body_len = bytes.len() - 32;
        let digest = Sha256::digest(&bytes[..body_len]);
        bytes[body_len..].copy_from_slice(&digest);
        std::fs::write(&path, &bytes).unwrap();
        let err = Checkpoint::load(&path).err().unwrap();
        let msg = err.to_string();
        assert!(msg.contains('7') && msg.contains('1'), "{msg}");
    }

    #[test]
    fn non_checkpoint_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        std::fs::write(&path, vec![0u8; 100]).unwrap();
        let err = Checkpoint::load(&path).err().unwrap();
        assert!(err.to_string().contains("magic"), "{err}");
    }
}
