//! Flat binary and CSV exchange formats for grid functions.
//!
//! Binary layout, all little endian: `dim: u64`, then per axis
//! `extent: f64, resolution: u64`, then the values as `f64` in row-major order.

use std::collections::BTreeSet;
use std::io::{BufRead, Read, Write};

use super::grid::{GridFunction, GridSpec};
use crate::error::{Error, Result};

pub fn write_binary<W: Write>(f: &GridFunction, mut w: W) -> Result<()> {
    let grid = f.grid();
    w.write_all(&(grid.dim() as u64).to_le_bytes())?;
    for (r, n) in grid.extent().iter().zip(grid.resolution()) {
        w.write_all(&r.to_le_bytes())?;
        w.write_all(&(*n as u64).to_le_bytes())?;
    }
    for v in f.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_binary<R: Read>(mut r: R) -> Result<GridFunction> {
    let dim = read_u64(&mut r)? as usize;
    if dim == 0 || dim > 16 {
        return Err(Error::Format(format!("implausible grid dimension {dim}")));
    }
    let mut extent = Vec::with_capacity(dim);
    let mut resolution = Vec::with_capacity(dim);
    for _ in 0..dim {
        extent.push(read_f64(&mut r)?);
        resolution.push(read_u64(&mut r)? as usize);
    }
    let grid = GridSpec::new(extent, resolution).map_err(|e| Error::Format(e.to_string()))?;
    let mut values = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        values.push(read_f64(&mut r)?);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after grid payload".into()));
    }
    GridFunction::new(grid, values).map_err(|e| Error::Format(e.to_string()))
}

/// CSV with columns `x1[,x2],value`; only for `dim <= 2`.
pub fn write_csv<W: Write>(f: &GridFunction, mut w: W) -> Result<()> {
    let grid = f.grid();
    if grid.dim() > 2 {
        return Err(Error::Unsupported("CSV export is limited to dim <= 2".into()));
    }
    let header: Vec<String> = (1..=grid.dim())
        .map(|a| format!("x{a}"))
        .chain(std::iter::once("value".to_string()))
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for (i, v) in f.values().iter().enumerate() {
        let cols: Vec<String> = grid
            .point(i)
            .iter()
            .chain(std::iter::once(v))
            .map(|c| format!("{c:.16e}"))
            .collect();
        writeln!(w, "{}", cols.join(","))?;
    }
    Ok(())
}

/// Reads the output of [`write_csv`]; the grid is recovered from the coordinates.
pub fn read_csv<R: BufRead>(r: R) -> Result<GridFunction> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('x') {
            continue;
        }
        let row = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))?;
        if *width.get_or_insert(row.len()) != row.len() {
            return Err(Error::Format(format!("line {}: ragged row", lineno + 1)));
        }
        rows.push(row);
    }
    let width = width.ok_or_else(|| Error::Format("empty grid CSV".into()))?;
    if !(2..=3).contains(&width) {
        return Err(Error::Format("grid CSV needs 2 or 3 columns".into()));
    }
    let dim = width - 1;
    let mut extent = Vec::new();
    let mut resolution = Vec::new();
    for a in 0..dim {
        let coords: BTreeSet<u64> = rows.iter().map(|r| r[a].to_bits()).collect();
        let mut sorted: Vec<f64> = coords.into_iter().map(f64::from_bits).collect();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        extent.push(-sorted[0]);
        resolution.push(n);
    }
    let grid = GridSpec::new(extent, resolution).map_err(|e| Error::Format(e.to_string()))?;
    if rows.len() != grid.len() {
        return Err(Error::Format(format!(
            "expected {} rows for the inferred grid, found {}",
            grid.len(),
            rows.len()
        )));
    }
    let values = rows.iter().map(|r| r[dim]).collect();
    GridFunction::new(grid, values).map_err(|e| Error::Format(e.to_string()))
}
