//! Binary checkpoint format for parameters and optimizer state.
//!
//! Layout, all integers little-endian: the magic bytes `IHGCL1\0`, then
//! `u32` format version, `u64` config hash, `u32` epoch, `u32` matrix
//! count; then per matrix a `u32` name length, the UTF-8 name, `u32` rows,
//! `u32` cols, and rows x cols `f64` values in row-major order. Writes go
//! through a temporary file renamed into place so a crash never leaves a
//! half-written checkpoint behind.

use crate::error::{Error, Result};
use crate::tensor::Dense;
use std::fs;
use std::path::Path;

pub const MAGIC: &[u8; 7] = b"IHGCL1\0";
pub const VERSION: u32 = 1;

/// Everything a run needs to continue: named matrices (parameters, both
/// optimizer moments, and the step counter) plus the identity of the config
/// that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_hash: u64,
    pub epoch: u32,
    pub matrices: Vec<(String, Dense)>,
}

impl Checkpoint {
    /// Look up a matrix by name.
    pub fn matrix(&self, name: &str) -> Option<&Dense> {
        self.matrices
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
    }

    /// Serialize to the on-disk byte layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.config_hash.to_le_bytes());
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.extend_from_slice(&(self.matrices.len() as u32).to_le_bytes());
        for (name, m) in &self.matrices {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(m.nrows() as u32).to_le_bytes());
            out.extend_from_slice(&(m.ncols() as u32).to_le_bytes());
            for &v in m.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Parse the on-disk byte layout.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
        let fail = |reason: &str| Error::Checkpoint {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        let mut cur = Cursor { bytes, pos: 0 };

        let magic = cur.take(MAGIC.len()).ok_or_else(|| fail("truncated magic"))?;
        if magic != MAGIC {
            return Err(fail("bad magic bytes"));
        }
        let version = cur.u32().ok_or_else(|| fail("truncated version"))?;
        if version != VERSION {
            return Err(fail(&format!("unsupported version {version}")));
        }
        let config_hash = cur.u64().ok_or_else(|| fail("truncated config hash"))?;
        let epoch = cur.u32().ok_or_else(|| fail("truncated epoch"))?;
        let count = cur.u32().ok_or_else(|| fail("truncated matrix count"))?;

        let mut matrices = Vec::with_capacity(count as usize);
        for i in 0..count {
            let name_len = cur
                .u32()
                .ok_or_else(|| fail(&format!("truncated name length of matrix {i}")))?;
            let name_bytes = cur
                .take(name_len as usize)
                .ok_or_else(|| fail(&format!("truncated name of matrix {i}")))?;
            let name = std::str::from_utf8(name_bytes)
                .map_err(|_| fail(&format!("matrix {i} name is not UTF-8")))?
                .to_string();
            let rows = cur
                .u32()
                .ok_or_else(|| fail(&format!("truncated rows of `{name}`")))? as usize;
            let cols = cur
                .u32()
                .ok_or_else(|| fail(&format!("truncated cols of `{name}`")))? as usize;
            let n = rows
                .checked_mul(cols)
                .ok_or_else(|| fail(&format!("matrix `{name}` dimensions overflow")))?;
            let data = cur
                .take(n * 8)
                .ok_or_else(|| fail(&format!("truncated data of `{name}`")))?;
            let values: Vec<f64> = data
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            let m = Dense::from_shape_vec((rows, cols), values)
                .map_err(|_| fail(&format!("matrix `{name}` shape mismatch")))?;
            matrices.push((name, m));
        }
        if cur.pos != bytes.len() {
            return Err(fail("trailing bytes after last matrix"));
        }
        Ok(Checkpoint {
            config_hash,
            epoch,
            matrices,
        })
    }

    /// Write atomically: serialize to `<path>.part`, then rename over `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("part");
        fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Read and parse a checkpoint file.
    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes, path)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let slice = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(slice)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4)
            .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8)
            .map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::dense;

    fn sample() -> Checkpoint {
        Checkpoint {
            config_hash: 0xDEAD_BEEF_0123_4567,
            epoch: 42,
            matrices: vec![
                ("user_emb".to_string(), dense(&[&[1.5, -2.0], &[0.0, 3.25]])),
                ("adam_t".to_string(), dense(&[&[7.0]])),
            ],
        }
    }

    #[test]
    fn byte_prefix_is_pinned() {
        let bytes = sample().to_bytes();
        assert_eq!(&bytes[..7], b"IHGCL1\0");
        assert_eq!(&bytes[7..11], &1u32.to_le_bytes());
        assert_eq!(&bytes[11..19], &0xDEAD_BEEF_0123_4567u64.to_le_bytes());
        assert_eq!(&bytes[19..23], &42u32.to_le_bytes());
        assert_eq!(&bytes[23..27], &2u32.to_le_bytes());
        assert_eq!(&bytes[27..31], &8u32.to_le_bytes());
        assert_eq!(&bytes[31..39], b"user_emb");
        assert_eq!(&bytes[39..43], &2u32.to_le_bytes());
        assert_eq!(&bytes[43..47], &2u32.to_le_bytes());
        assert_eq!(&bytes[47..55], &1.5f64.to_le_bytes());
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let ckpt = sample();
        ckpt.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(ckpt, back);
        assert_eq!(back.matrix("adam_t").unwrap()[(0, 0)], 7.0);
        assert!(back.matrix("missing").is_none());
        assert!(!path.with_extension("part").exists());
    }

    #[test]
    fn bad_magic_and_version_are_rejected() {
        let path = Path::new("x.ckpt");
        let mut bytes = sample().to_bytes();
        bytes[0] = b'J';
        assert!(matches!(
            Checkpoint::from_bytes(&bytes, path),
            Err(Error::Checkpoint { .. })
        ));

        let mut bytes = sample().to_bytes();
        bytes[7..11].copy_from_slice(&9u32.to_le_bytes());
        let err = Checkpoint::from_bytes(&bytes, path).unwrap_err();
        assert!(err.to_string().contains("version"));
    }

    #[test]
    fn truncation_and_trailing_bytes_are_rejected() {
        let path = Path::new("x.ckpt");
        let bytes = sample().to_bytes();
        for cut in [3, 9, 25, 33, 45, bytes.len() - 1] {
            assert!(
                Checkpoint::from_bytes(&bytes[..cut], path).is_err(),
                "cut at {cut} accepted"
            );
        }
        let mut padded = bytes.clone();
        padded.push(0);
        assert!(Checkpoint::from_bytes(&padded, path).is_err());
    }

    #[test]
    fn save_replaces_existing_file_atomically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut ckpt = sample();
        ckpt.save(&path).unwrap();
        ckpt.epoch = 43;
        ckpt.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap().epoch, 43);
    }
}
