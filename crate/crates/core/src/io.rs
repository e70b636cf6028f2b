//! Checkpoint files.
//!
//! Binary layout, all little-endian: a 32-byte header (`b"ADLB"`, `u32`
//! version, `u64` grid size, `u64` checkpoint count, 8 reserved zero bytes),
//! then the checkpoint times as `f64`, then each field row-major as `f64`.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{AdlabError, Result};
use crate::scalarsolver::{ScalarField, Trajectory};

pub const MAGIC: &[u8; 4] = b"ADLB";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 32;

pub fn write_fields(path: &Path, times: &[f64], fields: &[ScalarField]) -> Result<()> {
    if times.len() != fields.len() {
        return Err(AdlabError::Invalid(format!(
            "{} times for {} fields",
            times.len(),
            fields.len()
        )));
    }
    let n = fields.first().map_or(0, |f| f.n());
    if let Some(f) = fields.iter().find(|f| f.n() != n) {
        return Err(AdlabError::GridMismatch(n, f.n()));
    }
    let file = fs::File::create(path).map_err(|e| AdlabError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut header = [0u8; HEADER_LEN];
    header[0..4].copy_from_slice(MAGIC);
    header[4..8].copy_from_slice(&VERSION.to_le_bytes());
    header[8..16].copy_from_slice(&(n as u64).to_le_bytes());
    header[16..24].copy_from_slice(&(fields.len() as u64).to_le_bytes());
    let mut write = |bytes: &[u8]| w.write_all(bytes).map_err(|e| AdlabError::io(path, e));
    write(&header)?;
    for t in times {
        write(&t.to_le_bytes())?;
    }
    for f in fields {
        for v in f.values() {
            write(&v.to_le_bytes())?;
        }
    }
    w.flush().map_err(|e| AdlabError::io(path, e))
}

pub fn read_fields(path: &Path) -> Result<(Vec<f64>, Vec<ScalarField>)> {
    let file = fs::File::open(path).map_err(|e| AdlabError::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header).map_err(|e| AdlabError::io(path, e))?;
    if &header[0..4] != MAGIC {
        return Err(AdlabError::Invalid(format!("{}: bad magic", path.display())));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(AdlabError::Invalid(format!("{}: unsupported version {version}", path.display())));
    }
    let n = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(header[16..24].try_into().unwrap()) as usize;
    let mut read_f64s = |len: usize| -> Result<Vec<f64>> {
        let mut buf = vec![0u8; len * 8];
        r.read_exact(&mut buf).map_err(|e| AdlabError::io(path, e))?;
        Ok(buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    };
    let times = read_f64s(count)?;
    let mut fields = Vec::with_capacity(count);
    for _ in 0..count {
        fields.push(ScalarField::new(n, read_f64s(n * n)?)?);
    }
    Ok((times, fields))
}

/// Writes `<stem>.adlb` and `<stem>.csv`.
pub fn write_trajectory(dir: &Path, stem: &str, traj: &Trajectory) -> Result<()> {
    let times: Vec<f64> = if traj.fields.is_empty() { Vec::new() } else { traj.times() };
    write_fields(&dir.join(format!("{stem}.adlb")), &times, &traj.fields)?;
    write_text(&dir.join(format!("{stem}.csv")), &traj.to_csv())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| AdlabError::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| AdlabError::io(path, e))
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| AdlabError::io(path, e))
}
