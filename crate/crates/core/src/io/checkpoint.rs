//! Binary checkpoint format.
//!
//! ```text
//! "NAMOCKPT"  u32 version  str config_hash
//! u32 tensor_count  { str name, u32 ndim, u64 dims[ndim] }*   shape manifest
//! { f32 data[prod(dims)] }*                                    blobs, manifest order
//! u64 meta_len  meta_len bytes of JSON                         TrainerMeta
//! ```
//!
//! Integers and floats are little-endian; `str` is a u32 byte length followed
//! by UTF-8.

use crate::agent::{TrainerMeta, TrainerSnapshot};
use crate::nn::Tensor;
use std::io::{self, Read, Write};
use std::path::Path;
use thiserror::Error;

pub const MAGIC: &[u8; 8] = b"NAMOCKPT";
pub const VERSION: u32 = 1;

const MAX_NAME: usize = 1 << 12;
const MAX_DIMS: usize = 8;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a checkpoint file")]
    BadMagic,
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint metadata: {0}")]
    Meta(#[from] serde_json::Error),
}

pub fn write_checkpoint(w: &mut impl Write, snap: &TrainerSnapshot) -> Result<(), CheckpointError> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    write_str(w, &snap.meta.config_hash)?;
    w.write_all(&(snap.tensors.len() as u32).to_le_bytes())?;
    for (name, t) in &snap.tensors {
        write_str(w, name)?;
        w.write_all(&(t.shape.len() as u32).to_le_bytes())?;
        for &d in &t.shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
    }
    let mut buf = Vec::new();
    for (_, t) in &snap.tensors {
        buf.clear();
        buf.extend(t.data.iter().flat_map(|v| v.to_le_bytes()));
        w.write_all(&buf)?;
    }
    let meta = serde_json::to_vec(&snap.meta)?;
    w.write_all(&(meta.len() as u64).to_le_bytes())?;
    w.write_all(&meta)?;
    Ok(())
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<TrainerSnapshot, CheckpointError> {
    let mut magic = [0u8; 8];
    read_exact(r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = read_u32(r, "version")?;
    if version != VERSION {
        return Err(CheckpointError::Version { found: version, expected: VERSION });
    }
    let hash = read_str(r, "config hash")?;
    let count = read_u32(r, "tensor count")? as usize;
    let mut manifest = Vec::new();
    for i in 0..count {
        let name = read_str(r, &format!("name of tensor {i}"))?;
        let ndim = read_u32(r, &format!("rank of {name}"))? as usize;
        if ndim > MAX_DIMS {
            return Err(CheckpointError::Corrupt(format!("tensor {name} has rank {ndim}")));
        }
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(read_u64(r, &format!("shape of {name}"))? as usize);
        }
        manifest.push((name, shape));
    }
    let mut tensors = Vec::with_capacity(count);
    for (name, shape) in manifest {
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| CheckpointError::Corrupt(format!("tensor {name} is too large")))?;
        let mut bytes = Vec::new();
        r.take(n as u64).read_to_end(&mut bytes)?;
        if bytes.len() != n {
            return Err(CheckpointError::Corrupt(format!("truncated data of {name}")));
        }
        let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        tensors.push((name, Tensor { shape, data }));
    }
    let len = read_u64(r, "metadata length")?;
    let mut meta = Vec::new();
    r.take(len).read_to_end(&mut meta)?;
    if meta.len() as u64 != len {
        return Err(CheckpointError::Corrupt("truncated metadata".into()));
    }
    let meta: TrainerMeta = serde_json::from_slice(&meta)?;
    if meta.config_hash != hash {
        return Err(CheckpointError::Corrupt("header and metadata disagree on the config hash".into()));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(CheckpointError::Corrupt("trailing bytes".into()));
    }
    Ok(TrainerSnapshot { tensors, meta })
}

/// Writes through a temporary file and renames, so an interrupted save
/// leaves the previous checkpoint intact.
pub fn save_checkpoint(path: &Path, snap: &TrainerSnapshot) -> Result<(), CheckpointError> {
    let tmp = path.with_extension("tmp");
    {
        let mut w = io::BufWriter::new(std::fs::File::create(&tmp)?);
        write_checkpoint(&mut w, snap)?;
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<TrainerSnapshot, CheckpointError> {
    read_checkpoint(&mut io::BufReader::new(std::fs::File::open(path)?))
}

fn write_str(w: &mut impl Write, s: &str) -> io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<(), CheckpointError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => CheckpointError::Corrupt(format!("truncated {what}")),
        _ => CheckpointError::Io(e),
    })
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32, CheckpointError> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read, what: &str) -> Result<u64, CheckpointError> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, what)?;
    Ok(u64::from_le_bytes(b))
}

fn read_str(r: &mut impl Read, what: &str) -> Result<String, CheckpointError> {
    let n = read_u32(r, what)? as usize;
    if n > MAX_NAME {
        return Err(CheckpointError::Corrupt(format!("{what} is {n} bytes long")));
    }
    let mut b = vec![0u8; n];
    read_exact(r, &mut b, what)?;
    String::from_utf8(b).map_err(|_| CheckpointError::Corrupt(format!("{what} is not UTF-8")))
}
