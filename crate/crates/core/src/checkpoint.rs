//! Versioned binary checkpoints for a [`ParameterStore`].
//!
//! Layout, all integers unsigned 64-bit little-endian, all floats 64-bit
//! little-endian:
//!
//! ```text
//! magic "AQLCKPT1"
//! entry count
//! per entry: name length, UTF-8 name bytes, rank, dims...,
//!            values..., adam_m..., adam_v...
//! step count
//! ```
//!
//! Entries are written in sorted name order, so save -> load -> save is
//! byte-identical.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{AqlError, Result};
use crate::nn::{ParamEntry, ParameterStore};
use crate::scalar::Scalar;

const MAGIC: &[u8; 8] = b"AQLCKPT1";

pub fn write_store<F: Scalar, W: Write>(store: &ParameterStore<F>, out: &mut W) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&(store.len() as u64).to_le_bytes())?;
    for (name, entry) in store.iter() {
        out.write_all(&(name.len() as u64).to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        out.write_all(&(entry.shape.len() as u64).to_le_bytes())?;
        for &d in &entry.shape {
            out.write_all(&(d as u64).to_le_bytes())?;
        }
        for buf in [&entry.values, &entry.adam_m, &entry.adam_v] {
            for &v in buf.iter() {
                let v = v.to_f64().ok_or_else(|| {
                    AqlError::Checkpoint(format!("value in {} not representable as f64", name))
                })?;
                out.write_all(&v.to_le_bytes())?;
            }
        }
    }
    out.write_all(&store.step_count().to_le_bytes())?;
    Ok(())
}

pub fn read_store<F: Scalar, R: Read>(input: &mut R) -> Result<ParameterStore<F>> {
    let mut magic = [0u8; 8];
    read_exact(input, &mut magic)?;
    if &magic != MAGIC {
        return Err(AqlError::Checkpoint(format!(
            "bad magic {:?}, expected {:?}",
            magic, MAGIC
        )));
    }
    let count = read_u64(input)?;
    let mut store = ParameterStore::new();
    for _ in 0..count {
        let name_len = read_u64(input)? as usize;
        let mut name_bytes = vec![0u8; name_len];
        read_exact(input, &mut name_bytes)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|e| AqlError::Checkpoint(format!("invalid parameter name: {}", e)))?;
        let rank = read_u64(input)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u64(input)? as usize);
        }
        let numel: usize = shape.iter().product();
        let values = read_floats::<F, R>(input, numel)?;
        let adam_m = read_floats::<F, R>(input, numel)?;
        let adam_v = read_floats::<F, R>(input, numel)?;
        store.insert_entry(
            name,
            ParamEntry {
                shape,
                values,
                adam_m,
                adam_v,
            },
        );
    }
    store.set_step_count(read_u64(input)?);
    Ok(store)
}

pub fn save_checkpoint<F: Scalar>(store: &ParameterStore<F>, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_store(store, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint<F: Scalar>(path: &Path) -> Result<ParameterStore<F>> {
    let mut input = BufReader::new(File::open(path)?);
    let store = read_store(&mut input)?;
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(AqlError::Checkpoint("trailing bytes after checkpoint".into()));
    }
    Ok(store)
}

fn read_exact<R: Read>(input: &mut R, buf: &mut [u8]) -> Result<()> {
    input
        .read_exact(buf)
        .map_err(|_| AqlError::Checkpoint("truncated checkpoint".into()))
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(input, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_floats<F: Scalar, R: Read>(input: &mut R, n: usize) -> Result<Vec<F>> {
    let mut out = Vec::with_capacity(n);
    let mut b = [0u8; 8];
    for _ in 0..n {
        read_exact(input, &mut b)?;
        let v = f64::from_le_bytes(b);
        out.push(F::from_f64(v).ok_or_else(|| {
            AqlError::Checkpoint("stored value not representable in scalar type".into())
        })?);
    }
    Ok(out)
}
