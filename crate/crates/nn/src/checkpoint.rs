//! Binary parameter checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"CAISECKP"  u32 version
//! u32 config_len  config_len bytes of UTF-8 JSON
//! u32 tensor_count
//! per tensor: u32 name_len, name bytes, u32 rows, u32 cols, rows*cols f64
//! ```

use std::path::Path;

use crate::params::ParamStore;
use crate::tensor::{NnError, Tensor};

pub const MAGIC: &[u8; 8] = b"CAISECKP";
pub const VERSION: u32 = 1;

fn bad(msg: impl Into<String>) -> NnError {
    NnError::Checkpoint(msg.into())
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<(), NnError> {
    let v = u32::try_from(v).map_err(|_| bad("length does not fit in u32"))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn to_bytes(config: &serde_json::Value, store: &ParamStore) -> Result<Vec<u8>, NnError> {
    let mut out = Vec::with_capacity(16 + store.scalar_count() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let cfg = serde_json::to_vec(config).map_err(|e| bad(e.to_string()))?;
    put_u32(&mut out, cfg.len())?;
    out.extend_from_slice(&cfg);
    put_u32(&mut out, store.len())?;
    for (name, t) in store.iter() {
        put_u32(&mut out, name.len())?;
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.rows())?;
        put_u32(&mut out, t.cols())?;
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| bad("truncated file"))?;
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
}

pub fn from_bytes(buf: &[u8]) -> Result<(serde_json::Value, ParamStore), NnError> {
    let mut r = Reader { buf, at: 0 };
    if r.take(8)? != MAGIC {
        return Err(bad("not a checkpoint (bad magic)"));
    }
    let version = r.u32()? as u32;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let n = r.u32()?;
    let config = serde_json::from_slice(r.take(n)?).map_err(|e| bad(format!("config: {e}")))?;
    let count = r.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let n = r.u32()?;
        let name = std::str::from_utf8(r.take(n)?).map_err(|_| bad("tensor name is not UTF-8"))?.to_string();
        let rows = r.u32()?;
        let cols = r.u32()?;
        let bytes = r.take(rows.checked_mul(cols).and_then(|n| n.checked_mul(8)).ok_or_else(|| bad("tensor too large"))?)?;
        let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        if store.id(&name).is_some() {
            return Err(bad(format!("duplicate tensor `{name}`")));
        }
        store.add(name, Tensor::new(rows, cols, data)?);
    }
    if r.at != buf.len() {
        return Err(bad("trailing bytes"));
    }
    Ok((config, store))
}

pub fn save(path: impl AsRef<Path>, config: &serde_json::Value, store: &ParamStore) -> Result<(), NnError> {
    std::fs::write(path, to_bytes(config, store)?)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<(serde_json::Value, ParamStore), NnError> {
    from_bytes(&std::fs::read(path)?)
}

/// Copies values from `loaded` into `target`, requiring identical names and shapes.
pub fn restore_into(target: &mut ParamStore, loaded: &ParamStore) -> Result<(), NnError> {
    if target.len() != loaded.len() {
        return Err(bad(format!("expected {} tensors, checkpoint has {}", target.len(), loaded.len())));
    }
    let ids: Vec<_> = target.ids().collect();
    for id in ids {
        let name = target.name(id).to_string();
        let src = loaded.id(&name).map(|i| loaded.get(i)).ok_or_else(|| bad(format!("missing tensor `{name}`")))?;
        let dst = target.get_mut(id);
        if src.shape() != dst.shape() {
            return Err(bad(format!("tensor `{name}` has shape {:?}, expected {:?}", src.shape(), dst.shape())));
        }
        dst.data_mut().copy_from_slice(src.data());
    }
    Ok(())
}
