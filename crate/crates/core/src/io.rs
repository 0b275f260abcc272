//! Path and field export: CSV tables and a small binary matrix container.
//!
//! Container layout (little endian), 16-byte header then row-major data:
//!
//! ```text
//! 0..4   magic  b"SHEB"
//! 4..6   version (u16) = 1
//! 6..8   dtype code (u16), 1 = f64
//! 8..12  rows (u32)
//! 12..16 cols (u32)
//! ```

use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::sampler::PathSample;

pub const MAGIC: [u8; 4] = *b"SHEB";
pub const VERSION: u16 = 1;
pub const DTYPE_F64: u16 = 1;

/// Dense row-major matrix as stored in the container.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::Format(format!(
                "{rows}x{cols} matrix given {} values",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

pub fn write_container<W: Write>(mut w: W, m: &Matrix) -> Result<()> {
    let rows = u32::try_from(m.rows).map_err(|_| Error::Format("too many rows".into()))?;
    let cols = u32::try_from(m.cols).map_err(|_| Error::Format("too many columns".into()))?;
    let mut buf = Vec::with_capacity(16 + 8 * m.data.len());
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&DTYPE_F64.to_le_bytes());
    buf.extend_from_slice(&rows.to_le_bytes());
    buf.extend_from_slice(&cols.to_le_bytes());
    for x in &m.data {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_container<R: Read>(mut r: R) -> Result<Matrix> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)
        .map_err(|_| Error::Format("truncated header".into()))?;
    if header[0..4] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let dtype = u16::from_le_bytes([header[6], header[7]]);
    if dtype != DTYPE_F64 {
        return Err(Error::Format(format!("unsupported dtype code {dtype}")));
    }
    let rows = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if body.len() != rows * cols * 8 {
        return Err(Error::Format(format!(
            "expected {} data bytes, found {}",
            rows * cols * 8,
            body.len()
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Matrix::new(rows, cols, data)
}

pub fn save_container(path: &Path, m: &Matrix) -> Result<()> {
    write_container(fs::File::create(path)?, m)
}

pub fn load_container(path: &Path) -> Result<Matrix> {
    read_container(std::io::BufReader::new(fs::File::open(path)?))
}

/// Paths stacked as rows.
pub fn paths_matrix(paths: &[PathSample]) -> Result<Matrix> {
    let cols = paths.first().map_or(0, |p| p.values.len());
    if paths.iter().any(|p| p.values.len() != cols) {
        return Err(Error::GridMismatch("paths have different lengths".into()));
    }
    Matrix::new(
        paths.len(),
        cols,
        paths
            .iter()
            .flat_map(|p| p.values.iter().copied())
            .collect(),
    )
}

/// Two-column CSV with the given value header, shortest round-trip floats.
pub fn path_csv(path: &PathSample, value_name: &str) -> String {
    let mut s = format!("t,{value_name}\n");
    for (i, v) in path.values.iter().enumerate() {
        let _ = writeln!(s, "{},{}", path.grid.time(i), v);
    }
    s
}

pub fn write_path_csv(file: &Path, path: &PathSample, value_name: &str) -> Result<()> {
    fs::write(file, path_csv(path, value_name))?;
    Ok(())
}

/// Parse a `t,value` CSV back into `(times, values)`.
pub fn read_path_csv(file: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = fs::read_to_string(file)?;
    let mut lines = text.lines();
    lines
        .next()
        .ok_or_else(|| Error::Format("empty CSV".into()))?;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (n, line) in lines.enumerate() {
        let (t, v) = line
            .split_once(',')
            .ok_or_else(|| Error::Format(format!("line {}: expected two columns", n + 2)))?;
        let parse = |x: &str| {
            x.trim()
                .parse::<f64>()
                .map_err(|e| Error::Format(format!("line {}: {e}", n + 2)))
        };
        times.push(parse(t)?);
        values.push(parse(v)?);
    }
    Ok((times, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::TimeGrid;

    #[test]
    fn container_round_trip() {
        let m = Matrix::new(2, 3, vec![1.0, -2.5, 3.25, f64::MIN_POSITIVE, 0.0, 1e300]).unwrap();
        let mut buf = Vec::new();
        write_container(&mut buf, &m).unwrap();
        assert_eq!(buf.len(), 16 + 48);
        assert_eq!(&buf[0..4], b"SHEB");
        assert_eq!(read_container(&buf[..]).unwrap(), m);
    }

    #[test]
    fn container_rejects_corruption() {
        let m = Matrix::new(1, 2, vec![1.0, 2.0]).unwrap();
        let mut buf = Vec::new();
        write_container(&mut buf, &m).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_container(&bad[..]).is_err());
        assert!(read_container(&buf[..20]).is_err());
        let mut bad = buf.clone();
        bad[6] = 9;
        assert!(read_container(&bad[..]).is_err());
        assert!(Matrix::new(2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let p = PathSample::from_values(
            TimeGrid::dyadic(4).unwrap(),
            vec![0.0, 0.1, -0.3, 1.0 / 3.0, 2.0],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("p.csv");
        write_path_csv(&f, &p, "value").unwrap();
        assert!(fs::read_to_string(&f)
            .unwrap()
            .starts_with("t,value\n0,0\n"));
        let (t, v) = read_path_csv(&f).unwrap();
        assert_eq!(t, p.grid.times());
        assert_eq!(v, p.values);
    }
}
