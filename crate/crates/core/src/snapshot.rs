//! Flat binary parameter snapshots.
//!
//! Layout: 8-byte magic `OCT1DPAR`, u32 version, u32 entry count, then per
//! entry: u32 name length, UTF-8 name, u32 shape rank, u64 per dimension,
//! raw f64 values. All integers and floats little-endian. Values are stored
//! in double precision regardless of the training precision.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::ParamStore;
use crate::tensor::{Real, Tensor};

const MAGIC: &[u8; 8] = b"OCT1DPAR";
const VERSION: u32 = 1;

/// Serialize every entry of the store (parameters and buffers).
pub fn save_params<F: Real>(store: &ParamStore<F>, path: &Path) -> Result<()> {
    let mut out: Vec<u8> = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (name, value, _) in store.entries() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(value.shape().len() as u32).to_le_bytes());
        for &d in value.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in value.data() {
            out.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Read back every entry of a snapshot file.
pub fn read_snapshot(path: &Path) -> Result<Vec<(String, Tensor<f64>)>> {
    let bytes = std::fs::read(path)?;
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > bytes.len() {
            return Err(Error::Snapshot(format!(
                "truncated snapshot at byte {} of {}",
                *pos,
                bytes.len()
            )));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    let read_u32 = |pos: &mut usize| -> Result<u32> {
        Ok(u32::from_le_bytes(take(pos, 4)?.try_into().unwrap()))
    };
    let read_u64 = |pos: &mut usize| -> Result<u64> {
        Ok(u64::from_le_bytes(take(pos, 8)?.try_into().unwrap()))
    };

    if take(&mut pos, 8)? != MAGIC {
        return Err(Error::Snapshot("bad magic".into()));
    }
    let version = read_u32(&mut pos)?;
    if version != VERSION {
        return Err(Error::Snapshot(format!("unsupported version {version}")));
    }
    let count = read_u32(&mut pos)? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u32(&mut pos)? as usize;
        let name = String::from_utf8(take(&mut pos, name_len)?.to_vec())
            .map_err(|_| Error::Snapshot("parameter name is not UTF-8".into()))?;
        let rank = read_u32(&mut pos)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u64(&mut pos)? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            data.push(f64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()));
        }
        entries.push((name, Tensor::from_vec(shape, data)?));
    }
    Ok(entries)
}

/// Restore a store from a snapshot. Every store entry must be present in
/// the file with a matching shape.
pub fn load_params<F: Real>(store: &mut ParamStore<F>, path: &Path) -> Result<()> {
    let entries = read_snapshot(path)?;
    let mut seen = 0usize;
    for (name, value) in &entries {
        if let Some(id) = store.id_of(name) {
            if store.get(id).shape() != value.shape() {
                return Err(Error::Snapshot(format!(
                    "parameter {name}: snapshot shape {:?} vs model shape {:?}",
                    value.shape(),
                    store.get(id).shape()
                )));
            }
            store.set(id, Tensor::from_f64_tensor(value));
            seen += 1;
        }
    }
    if seen != store.len() {
        return Err(Error::Snapshot(format!(
            "snapshot covers {seen} of {} model parameters",
            store.len()
        )));
    }
    Ok(())
}
