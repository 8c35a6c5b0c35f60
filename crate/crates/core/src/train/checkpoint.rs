//! Binary parameter snapshots.
//!
//! Layout (little-endian): magic `BDLB`, `u32` version, 32-byte config
//! digest, `u32` parameter count, then per parameter: `u32` name length,
//! UTF-8 name, `u32` rank, `u64` dims, `f32` values.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::param::ParamStore;
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"BDLB";
pub const VERSION: u32 = 1;

pub fn config_digest(canonical: &str) -> [u8; 32] {
    Sha256::digest(canonical.as_bytes()).into()
}

pub fn encode<T: Scalar>(store: &ParamStore<T>, digest: &[u8; 32]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(digest);
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (_, p) in store.iter() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        let shape = p.value.shape();
        out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in p.value.data() {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Overwrites parameter values in `store`. Names, shapes and the config
/// digest must all match.
pub fn decode_into<T: Scalar>(bytes: &[u8], store: &mut ParamStore<T>, digest: &[u8; 32]) -> Result<()> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    if r.take(32)? != digest {
        return Err(Error::Checkpoint("config digest does not match the checkpoint".into()));
    }
    let count = r.u32()? as usize;
    if count != store.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint has {count} parameters, model has {}",
            store.len()
        )));
    }
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let id = store
            .id(&name)
            .map_err(|_| Error::Checkpoint(format!("unknown parameter `{name}`")))?;
        let p = store.get_mut(id);
        if p.value.shape() != shape.as_slice() {
            return Err(Error::Checkpoint(format!(
                "`{name}` has shape {shape:?} in the checkpoint, {:?} in the model",
                p.value.shape()
            )));
        }
        for v in p.value.data_mut() {
            let raw = f32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
            *v = T::lit(raw as f64);
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok(())
}

pub fn save<T: Scalar>(path: impl AsRef<Path>, store: &ParamStore<T>, digest: &[u8; 32]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(store, digest)).map_err(|e| Error::io(path, e))
}

pub fn load_into<T: Scalar>(path: impl AsRef<Path>, store: &mut ParamStore<T>, digest: &[u8; 32]) -> Result<()> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_into(&bytes, store, digest)
}
