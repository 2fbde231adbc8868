//! Binary embedding checkpoints.
//!
//! Layout: a 16-byte header of four little-endian `u32`s (magic, version,
//! rows, cols) followed by the matrix as row-major little-endian `f64`.

use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

pub const MAGIC: u32 = u32::from_le_bytes(*b"SCEM");
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

pub fn encode(e: ArrayView2<f64>) -> Result<Vec<u8>> {
    let (n, d) = e.dim();
    let rows = u32::try_from(n).map_err(|_| Error::Checkpoint(format!("{n} rows overflow u32")))?;
    let cols = u32::try_from(d).map_err(|_| Error::Checkpoint(format!("{d} cols overflow u32")))?;
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * n * d);
    for word in [MAGIC, VERSION, rows, cols] {
        buf.extend_from_slice(&word.to_le_bytes());
    }
    for v in e.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    Ok(buf)
}

pub fn decode(bytes: &[u8]) -> Result<Array2<f64>> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Checkpoint(format!(
            "{} bytes is shorter than the header",
            bytes.len()
        )));
    }
    let word = |k: usize| u32::from_le_bytes(bytes[4 * k..4 * k + 4].try_into().expect("4 bytes"));
    if word(0) != MAGIC {
        return Err(Error::Checkpoint(format!("bad magic {:#010x}", word(0))));
    }
    if word(1) != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {}", word(1))));
    }
    let (n, d) = (word(2) as usize, word(3) as usize);
    let expected = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(8))
        .and_then(|c| c.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::Checkpoint(format!("shape {n}x{d} overflows")))?;
    if bytes.len() != expected {
        return Err(Error::Checkpoint(format!(
            "shape {n}x{d} needs {expected} bytes, file has {}",
            bytes.len()
        )));
    }
    let values = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Array2::from_shape_vec((n, d), values).map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn save(path: impl AsRef<Path>, e: ArrayView2<f64>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(e)?).map_err(|err| Error::io(path, err))
}

pub fn load(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|err| Error::io(path, err))?;
    decode(&bytes)
}
