//! Flat binary ensemble files and single-path CSV.
//!
//! Layout (little-endian): magic `GRDE`, u32 version, u64 N, u64 d, u64 n_paths,
//! u64 seed, u64 kernel-JSON length, kernel JSON bytes, then f64 values: the N + 1
//! grid nodes followed by the path data in path-major, node-major order.

use std::io::{Read, Write};
use std::path::Path;

use super::PathEnsemble;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;

const MAGIC: &[u8; 4] = b"GRDE";
const VERSION: u32 = 1;

pub fn write_ensemble<W: Write>(e: &PathEnsemble, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for v in [e.grid.n() as u64, e.d as u64, e.n_paths as u64, e.seed, e.kernel.len() as u64] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(e.kernel.as_bytes())?;
    for x in e.grid.nodes().iter().chain(&e.data) {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

pub fn read_ensemble<R: Read>(mut r: R) -> Result<PathEnsemble> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let mut v = [0u8; 4];
    r.read_exact(&mut v)?;
    if u32::from_le_bytes(v) != VERSION {
        return Err(Error::Format(format!("unsupported version {}", u32::from_le_bytes(v))));
    }
    let n = read_u64(&mut r)? as usize;
    let d = read_u64(&mut r)? as usize;
    let n_paths = read_u64(&mut r)? as usize;
    let seed = read_u64(&mut r)?;
    let klen = read_u64(&mut r)? as usize;
    let mut kb = vec![0u8; klen];
    r.read_exact(&mut kb)?;
    let kernel = String::from_utf8(kb).map_err(|_| Error::Format("kernel JSON is not UTF-8".into()))?;
    let nodes = read_f64s(&mut r, n + 1)?;
    let uniform = TimeGrid::uniform(*nodes.last().unwrap_or(&0.0), n)?;
    let grid = if uniform.nodes() == nodes.as_slice() { uniform } else { TimeGrid::from_nodes(nodes)? };
    let data = read_f64s(&mut r, n_paths * (n + 1) * d)?;
    Ok(PathEnsemble { grid, d, n_paths, data, seed, kernel })
}

/// Columns `t, x1, ..., xd`.
pub fn write_path_csv(e: &PathEnsemble, p: usize, path: &Path) -> Result<()> {
    std::fs::write(path, path_csv(e, p))?;
    Ok(())
}

pub fn path_csv(e: &PathEnsemble, p: usize) -> String {
    let mut out = String::from("t");
    for j in 1..=e.d {
        out.push_str(&format!(",x{j}"));
    }
    out.push('\n');
    let x = e.path(p);
    for (i, t) in e.grid.nodes().iter().enumerate() {
        out.push_str(&format!("{t}"));
        for j in 0..e.d {
            out.push_str(&format!(",{}", x[i * e.d + j]));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::{CovKernel, KernelSpec};
    use crate::gaussian_path::sample;

    #[test]
    fn roundtrip() {
        let k = CovKernel::new(KernelSpec::fbm(0.4, 1.0)).unwrap();
        let grid = TimeGrid::uniform(1.0, 16).unwrap();
        let e = sample(&k, &grid, 2, 5, 8).unwrap();
        let mut buf = Vec::new();
        write_ensemble(&e, &mut buf).unwrap();
        let back = read_ensemble(buf.as_slice()).unwrap();
        assert_eq!(back, e);
        buf[0] = b'X';
        assert!(matches!(read_ensemble(buf.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn csv_export() {
        let k = CovKernel::new(KernelSpec::brownian(1.0)).unwrap();
        let grid = TimeGrid::uniform(1.0, 4).unwrap();
        let e = sample(&k, &grid, 2, 1, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("p.csv");
        write_path_csv(&e, 0, &f).unwrap();
        let text = std::fs::read_to_string(f).unwrap();
        assert!(text.starts_with("t,x1,x2\n0,0,0\n"));
        assert_eq!(text.lines().count(), 6);
    }
}
