//! Test functions for the probes.

use num_complex::Complex64;

use super::grid::{fft_nd, GridFunction, GridSpec};
use crate::error::{Error, Result};

fn check_center(grid: &GridSpec, center: &[f64]) -> Result<()> {
    if center.len() != grid.dim() {
        return Err(Error::arg("center dimension differs from grid dimension"));
    }
    Ok(())
}

/// `exp(-|x - center|^2 / (2 width^2))`.
pub fn gaussian_bump(grid: &GridSpec, center: &[f64], width: f64) -> Result<GridFunction> {
    check_center(grid, center)?;
    if !(width > 0.0) {
        return Err(Error::arg("bump width must be positive"));
    }
    GridFunction::from_fn(grid.clone(), |x| {
        let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
        (-0.5 * r2 / (width * width)).exp()
    })
}

/// Compactly supported `exp(1 - 1/(1 - |x - center|^2 / radius^2))`, peak 1.
pub fn smooth_bump(grid: &GridSpec, center: &[f64], radius: f64) -> Result<GridFunction> {
    check_center(grid, center)?;
    if !(radius > 0.0) {
        return Err(Error::arg("bump radius must be positive"));
    }
    GridFunction::from_fn(grid.clone(), |x| {
        let s: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / (radius * radius);
        if s < 1.0 {
            (1.0 - 1.0 / (1.0 - s)).exp()
        } else {
            0.0
        }
    })
}

/// Centered Gaussian bumps, one per width.
pub fn bump_panel(grid: &GridSpec, widths: &[f64]) -> Result<Vec<GridFunction>> {
    let center = vec![0.0; grid.dim()];
    widths.iter().map(|&w| gaussian_bump(grid, &center, w)).collect()
}

/// Centered function with spectrum `(1 + |xi|^2)^{-(d/4 + order/2)}`,
/// normalized to unit grid `L^2` norm. It lies in `H^{s,2}` exactly for
/// `s < order`, so semigroup rates at `p = 2` are not masked by extra
/// smoothness.
pub fn critical_profile(grid: &GridSpec, order: f64) -> Result<GridFunction> {
    if !(order >= 0.0 && order.is_finite()) {
        return Err(Error::arg("profile order must be non-negative"));
    }
    let e = -(grid.dim() as f64 / 4.0 + order / 2.0);
    let mut data: Vec<Complex64> = (0..grid.len())
        .map(|i| {
            let n2: f64 = grid.frequency_vector(i).iter().map(|v| v * v).sum();
            Complex64::new(grid.shift_sign(i) * (1.0 + n2).powf(e), 0.0)
        })
        .collect();
    zero_nyquist(grid, &mut data);
    fft_nd(grid, &mut data, true);
    let f = GridFunction::new(grid.clone(), data.iter().map(|c| c.re).collect())?;
    let norm = f.lp_norm(2.0);
    Ok(f.scaled(1.0 / norm))
}

/// Drops Nyquist rows so the synthesized profile is exactly even.
fn zero_nyquist(grid: &GridSpec, data: &mut [Complex64]) {
    for (i, v) in data.iter_mut().enumerate() {
        if grid.on_nyquist(i) {
            *v = Complex64::new(0.0, 0.0);
        }
    }
}
