//! Particle clouds as CSV (`w,x1,..,xd`) or flat binary.
//!
//! Binary layout, little endian: `dim: u64`, `count: u64`, then per particle
//! the weight followed by the coordinates, all `f64`.

use std::io::{BufRead, Read, Write};

use super::EmpiricalMeasure;
use crate::error::{Error, Result};

pub fn write_csv<W: Write>(mu: &EmpiricalMeasure, mut w: W) -> Result<()> {
    let mut header = vec!["w".to_string()];
    header.extend((1..=mu.dim()).map(|a| format!("x{a}")));
    writeln!(w, "{}", header.join(","))?;
    for i in 0..mu.len() {
        let mut cols = vec![format!("{:.16e}", mu.weights()[i])];
        cols.extend(mu.particle(i).iter().map(|v| format!("{v:.16e}")));
        writeln!(w, "{}", cols.join(","))?;
    }
    Ok(())
}

/// Reads `w,x1,..,xd` rows; lines starting with `#` and the header are skipped.
pub fn read_csv<R: BufRead>(r: R) -> Result<EmpiricalMeasure> {
    let mut dim = None;
    let mut particles = Vec::new();
    let mut weights = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('w') {
            continue;
        }
        let row = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))?;
        if row.len() < 2 {
            return Err(Error::Format(format!("line {}: need a weight and coordinates", lineno + 1)));
        }
        if *dim.get_or_insert(row.len() - 1) != row.len() - 1 {
            return Err(Error::Format(format!("line {}: ragged row", lineno + 1)));
        }
        weights.push(row[0]);
        particles.extend_from_slice(&row[1..]);
    }
    let dim = dim.ok_or_else(|| Error::Format("empty particle CSV".into()))?;
    EmpiricalMeasure::new(dim, particles, Some(weights)).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_binary<W: Write>(mu: &EmpiricalMeasure, mut w: W) -> Result<()> {
    w.write_all(&(mu.dim() as u64).to_le_bytes())?;
    w.write_all(&(mu.len() as u64).to_le_bytes())?;
    for i in 0..mu.len() {
        w.write_all(&mu.weights()[i].to_le_bytes())?;
        for v in mu.particle(i) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<EmpiricalMeasure> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    let dim = u64::from_le_bytes(b) as usize;
    r.read_exact(&mut b)?;
    let count = u64::from_le_bytes(b) as usize;
    if dim == 0 || count == 0 {
        return Err(Error::Format("particle file declares an empty cloud".into()));
    }
    let mut weights = Vec::with_capacity(count);
    let mut particles = Vec::with_capacity(count * dim);
    for _ in 0..count {
        r.read_exact(&mut b)?;
        weights.push(f64::from_le_bytes(b));
        for _ in 0..dim {
            r.read_exact(&mut b)?;
            particles.push(f64::from_le_bytes(b));
        }
    }
    EmpiricalMeasure::new(dim, particles, Some(weights)).map_err(|e| Error::Format(e.to_string()))
}
