//! Matrix persistence.
//!
//! Binary layout: 8-byte magic `HYBMAT01`, row count and column count as
//! little-endian `u64`, then `rows * cols` little-endian `f64` in row-major
//! order. CSV export is for inspection only and is not read back.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hessian::{HessianMatrix, HessianProvenance};

pub const MAGIC: &[u8; 8] = b"HYBMAT01";
const HEADER_LEN: usize = 24;

pub fn encode_matrix(a: &DMatrix<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * a.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(a.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(a.ncols() as u64).to_le_bytes());
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            out.extend_from_slice(&a[(i, j)].to_le_bytes());
        }
    }
    out
}

pub fn decode_matrix(bytes: &[u8]) -> Result<DMatrix<f64>> {
    if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
        return Err(Error::Format("missing matrix header".into()));
    }
    let word = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
    let (rows, cols) = (word(8) as usize, word(16) as usize);
    let expected = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(8))
        .and_then(|c| c.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::Format(format!("implausible shape {rows}x{cols}")))?;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "{rows}x{cols} matrix needs {expected} bytes, found {}",
            bytes.len()
        )));
    }
    let values = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    Ok(DMatrix::from_row_iterator(rows, cols, values))
}

pub fn write_matrix(path: &Path, a: &DMatrix<f64>) -> Result<()> {
    fs::write(path, encode_matrix(a))?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_matrix(&bytes)
}

pub fn write_matrix_csv(path: &Path, a: &DMatrix<f64>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for i in 0..a.nrows() {
        let row: Vec<String> = (0..a.ncols()).map(|j| a[(i, j)].to_string()).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

#[derive(serde::Serialize, serde::Deserialize)]
struct HessianSidecar {
    preconditioned: bool,
    beta: f64,
    provenance: HessianProvenance,
}

/// Writes the matrix to `path` and its provenance next to it as `.json`.
pub fn write_hessian(path: &Path, s: &HessianMatrix) -> Result<()> {
    write_matrix(path, s.data())?;
    let meta = HessianSidecar {
        preconditioned: s.preconditioned(),
        beta: s.beta(),
        provenance: s.provenance().clone(),
    };
    fs::write(sidecar(path), serde_json::to_vec_pretty(&meta)?)?;
    Ok(())
}
