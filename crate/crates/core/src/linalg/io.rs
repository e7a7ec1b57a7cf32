//! Matrix serialization.
//!
//! Binary blob layout (all little-endian):
//!
//! ```text
//! u64 rows | u64 cols | rows*cols x (f64 re, f64 im), row-major
//! ```
//!
//! Blobs concatenate; a reader consumes exactly one matrix per call.

use std::io::{Read, Write};

use num_complex::Complex64;

use super::ComplexMatrix;
use crate::error::{Error, Result};

/// Refuse headers that would allocate more than this many entries.
const MAX_ENTRIES: u64 = 1 << 28;

pub fn write_blob<W: Write>(w: &mut W, m: &ComplexMatrix) -> Result<()> {
    w.write_all(&(m.rows() as u64).to_le_bytes())?;
    w.write_all(&(m.cols() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(16 * m.data().len());
    for z in m.data() {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_blob<R: Read>(r: &mut R) -> Result<ComplexMatrix> {
    let rows = read_u64(r)?;
    let cols = read_u64(r)?;
    let len = rows.checked_mul(cols).filter(|&l| l <= MAX_ENTRIES).ok_or_else(|| {
        Error::Format(format!("implausible matrix header {rows}x{cols}"))
    })?;
    let mut buf = vec![0u8; 16 * len as usize];
    r.read_exact(&mut buf)?;
    let data = buf
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex64::new(re, im)
        })
        .collect();
    ComplexMatrix::from_vec(rows as usize, cols as usize, data)
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Tidy CSV with one `row,col,re,im` line per entry.
pub fn to_csv(m: &ComplexMatrix) -> String {
    let mut s = String::from("row,col,re,im\n");
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            let z = m[(i, j)];
            s.push_str(&format!("{i},{j},{:e},{:e}\n", z.re, z.im));
        }
    }
    s
}
