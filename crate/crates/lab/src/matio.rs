//! Complex matrix files.
//!
//! CSV: first line `rows,cols`, then one `re,im` line per entry in row-major
//! order. Binary: magic `MMCM`, u32 version, u64 rows, u64 cols, then re/im
//! f64 pairs in row-major order, all little-endian.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use mmimo_core::{CMat, C64};

use crate::{LabError, Result};

const MAGIC: &[u8; 4] = b"MMCM";
const VERSION: u32 = 1;

pub fn write_csv(path: &Path, a: &CMat) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{},{}", a.nrows(), a.ncols())?;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            let z = a[(i, j)];
            writeln!(w, "{},{}", z.re, z.im)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn bad(path: &Path, what: &str) -> LabError {
    LabError::Config(format!("{}: {what}", path.display()))
}

pub fn read_csv(path: &Path) -> Result<CMat> {
    let r = BufReader::new(File::open(path)?);
    let mut lines = r.lines();
    let head = lines.next().ok_or_else(|| bad(path, "empty file"))??;
    let pair = |s: &str| -> Option<(String, String)> {
        let (a, b) = s.trim().split_once(',')?;
        Some((a.trim().to_string(), b.trim().to_string()))
    };
    let (r_s, c_s) = pair(&head).ok_or_else(|| bad(path, "missing shape header"))?;
    let rows: usize = r_s.parse().map_err(|_| bad(path, "bad row count"))?;
    let cols: usize = c_s.parse().map_err(|_| bad(path, "bad column count"))?;
    let mut data = Vec::with_capacity(rows * cols);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (re, im) = pair(&line).ok_or_else(|| bad(path, "entry is not re,im"))?;
        let re: f64 = re.parse().map_err(|_| bad(path, "bad real part"))?;
        let im: f64 = im.parse().map_err(|_| bad(path, "bad imaginary part"))?;
        data.push(C64::new(re, im));
    }
    if data.len() != rows * cols {
        return Err(bad(path, &format!("expected {} entries, found {}", rows * cols, data.len())));
    }
    Ok(CMat::from_row_slice(rows, cols, &data))
}

pub fn write_bin(path: &Path, a: &CMat) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(a.nrows() as u64).to_le_bytes())?;
    w.write_all(&(a.ncols() as u64).to_le_bytes())?;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            let z = a[(i, j)];
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_bin(path: &Path) -> Result<CMat> {
    let mut buf = Vec::new();
    File::open(path)?.read_to_end(&mut buf)?;
    if buf.len() < 24 || &buf[..4] != MAGIC {
        return Err(bad(path, "not a matrix file"));
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(bad(path, &format!("unsupported version {version}")));
    }
    let rows = u64::from_le_bytes(buf[8..16].try_into().expect("8 bytes")) as usize;
    let cols = u64::from_le_bytes(buf[16..24].try_into().expect("8 bytes")) as usize;
    let body = &buf[24..];
    if body.len() != rows * cols * 16 {
        return Err(bad(path, "truncated payload"));
    }
    let data: Vec<C64> = body
        .chunks_exact(16)
        .map(|c| C64::new(f64::from_le_bytes(c[..8].try_into().expect("8")), f64::from_le_bytes(c[8..].try_into().expect("8"))))
        .collect();
    Ok(CMat::from_row_slice(rows, cols, &data))
}
