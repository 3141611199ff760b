//! Log-log rate probes for the semigroup estimates.

use num_complex::Complex64;
use rayon::prelude::*;

use super::grid::{lp_norm_of, GridFunction, GridSpec, Spectrum};
use super::{bessel_weight, BesselNormSpec, SymbolGrid};
use crate::error::{Error, Result};
use crate::levy_model::LevyModel;
use crate::numerics::fit_loglog;

/// Log-log fit of a norm against `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeReport {
    pub t_grid: Vec<f64>,
    pub values: Vec<f64>,
    /// Which time points entered the fit.
    pub used: Vec<bool>,
    pub slope: f64,
    pub intercept: f64,
    /// Exponent predicted by the estimate being probed.
    pub reference: f64,
    pub passes: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub order: usize,
    pub t_grid: Vec<f64>,
    /// `sup_f ||nabla^k P_t f||_p / ||f||_p` per time.
    pub ratios: Vec<f64>,
    pub used: Vec<bool>,
    pub slope: f64,
    /// `max_t ratio(t) t^{k/alpha}` over the fitted times.
    pub worst_m: f64,
    pub reference: f64,
    pub passes: bool,
}

const SLOPE_SLACK: f64 = 0.1;

fn check_times(t_grid: &[f64], min_decades: f64) -> Result<()> {
    if t_grid.len() < 3 {
        return Err(Error::arg("probe needs at least 3 time points"));
    }
    if t_grid.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(Error::arg("probe times must be positive"));
    }
    let lo = t_grid.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = t_grid.iter().cloned().fold(0.0, f64::max);
    if (hi / lo).log10() < min_decades - 1e-12 {
        return Err(Error::arg(format!(
            "probe times must span at least {min_decades} decades"
        )));
    }
    Ok(())
}

/// Drops the two smallest times when `t^{1/alpha}` falls below four cells.
fn fit_mask(t_grid: &[f64], alpha: f64, grid: &GridSpec) -> Result<Vec<bool>> {
    let mut used = vec![true; t_grid.len()];
    let h = grid.min_spacing();
    let smallest = t_grid.iter().cloned().fold(f64::INFINITY, f64::min);
    if smallest.powf(1.0 / alpha) < 4.0 * h {
        let mut order: Vec<usize> = (0..t_grid.len()).collect();
        order.sort_by(|&a, &b| t_grid[a].total_cmp(&t_grid[b]));
        for &i in order.iter().take(2) {
            used[i] = false;
        }
    }
    if used.iter().filter(|u| **u).count() < 2 {
        return Err(Error::arg("too few time points left after the resolution cut"));
    }
    Ok(used)
}

fn masked_fit(t_grid: &[f64], values: &[f64], used: &[bool]) -> Result<(f64, f64)> {
    let (t, v): (Vec<f64>, Vec<f64>) = t_grid
        .iter()
        .zip(values)
        .zip(used)
        .filter(|(_, u)| **u)
        .map(|((t, v), _)| (*t, *v))
        .unzip();
    if v.iter().any(|x| !(*x > 0.0)) {
        return Err(Error::numerical("probe norm vanished; cannot fit a log-log slope", 0.0));
    }
    let fit = fit_loglog(&t, &v)?;
    Ok((fit.slope, fit.intercept))
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 1.0) {
        return Err(Error::arg(format!("p must lie in (1, inf], got {p}")));
    }
    Ok(())
}

/// Pointwise Euclidean (k = 1) or Frobenius (k = 2) norm of `nabla^k P_t f`.
fn derivative_norm(
    spectrum: &Spectrum,
    symbol: &SymbolGrid,
    t: f64,
    order: usize,
    p: f64,
) -> f64 {
    let grid = &spectrum.grid;
    let d = grid.dim();
    let mut index = vec![0usize; grid.len() * d];
    for (i, chunk) in index.chunks_mut(d).enumerate() {
        grid.unravel(i, chunk);
    }
    let mut pointwise = vec![0.0; grid.len()];
    let mut pairs = Vec::new();
    for a in 0..d {
        if order == 1 {
            pairs.push((a, a, 1.0));
        } else {
            for b in a..d {
                pairs.push((a, b, if a == b { 1.0 } else { 2.0 }));
            }
        }
    }
    for (a, b, weight) in pairs {
        let (values, _) = spectrum.synthesize(|i| {
            let k = &index[i * d..(i + 1) * d];
            let nyq = |axis: usize| k[axis] == grid.resolution()[axis] / 2;
            let heat = (-t * symbol.values()[i]).exp();
            if order == 1 {
                if nyq(a) {
                    return Complex64::new(0.0, 0.0);
                }
                Complex64::new(0.0, grid.frequency(a, k[a]) * heat)
            } else {
                if a != b && (nyq(a) || nyq(b)) {
                    return Complex64::new(0.0, 0.0);
                }
                Complex64::new(-grid.frequency(a, k[a]) * grid.frequency(b, k[b]) * heat, 0.0)
            }
        });
        for (acc, v) in pointwise.iter_mut().zip(values) {
            *acc += weight * v * v;
        }
    }
    let pointwise: Vec<f64> = pointwise.into_iter().map(f64::sqrt).collect();
    lp_norm_of(&pointwise, grid.cell_volume(), p)
}

/// Rate of `sup_f ||nabla^k P_t f||_p / ||f||_p`; passes iff the slope is at
/// least `-k/alpha - 0.1`.
pub fn gradient_bound_probe(
    model: &LevyModel,
    p: f64,
    t_grid: &[f64],
    f_panel: &[GridFunction],
    order: usize,
) -> Result<GradientReport> {
    check_p(p)?;
    check_times(t_grid, 2.0)?;
    if !(order == 1 || order == 2) {
        return Err(Error::arg("derivative order must be 1 or 2"));
    }
    let first = f_panel
        .first()
        .ok_or_else(|| Error::arg("test-function panel is empty"))?;
    let grid = first.grid();
    if f_panel.iter().any(|f| f.grid() != grid) {
        return Err(Error::arg("panel functions live on different grids"));
    }
    if f_panel.iter().any(|f| f.lp_norm(p) == 0.0) {
        return Err(Error::arg("panel contains a zero function"));
    }
    let symbol = SymbolGrid::new(model, grid)?;
    let per_f: Vec<Vec<f64>> = f_panel
        .par_iter()
        .map(|f| {
            let spectrum = Spectrum::of(f);
            let base = f.lp_norm(p);
            t_grid
                .iter()
                .map(|&t| derivative_norm(&spectrum, &symbol, t, order, p) / base)
                .collect()
        })
        .collect();
    let ratios: Vec<f64> = (0..t_grid.len())
        .map(|j| per_f.iter().map(|r| r[j]).fold(0.0, f64::max))
        .collect();
    let alpha = model.alpha();
    let used = fit_mask(t_grid, alpha, grid)?;
    let (slope, _) = masked_fit(t_grid, &ratios, &used)?;
    let k = order as f64;
    let worst_m = t_grid
        .iter()
        .zip(&ratios)
        .zip(&used)
        .filter(|(_, u)| **u)
        .map(|((t, r), _)| r * t.powf(k / alpha))
        .fold(0.0, f64::max);
    let reference = -k / alpha;
    Ok(GradientReport {
        order,
        t_grid: t_grid.to_vec(),
        ratios,
        used,
        slope,
        worst_m,
        reference,
        passes: slope >= reference - SLOPE_SLACK,
    })
}

fn spectral_series(
    model: &LevyModel,
    t_grid: &[f64],
    f: &GridFunction,
    p: f64,
    multiplier: impl Fn(&GridSpec, f64, f64, usize) -> f64 + Sync,
) -> Result<Vec<f64>> {
    let symbol = SymbolGrid::new(model, f.grid())?;
    let spectrum = Spectrum::of(f);
    let grid = f.grid();
    Ok(t_grid
        .par_iter()
        .map(|&t| {
            let (values, _) = spectrum
                .synthesize(|i| Complex64::new(multiplier(grid, t, symbol.values()[i], i), 0.0));
            lp_norm_of(&values, grid.cell_volume(), p)
        })
        .collect())
}

/// Rate of `||P_t f||_{beta + gamma, p}`; passes iff the slope is at least
/// `-gamma/alpha - 0.1`.
pub fn smoothing_probe(
    model: &LevyModel,
    p: f64,
    gamma: f64,
    beta: f64,
    t_grid: &[f64],
    f: &GridFunction,
) -> Result<SlopeReport> {
    check_p(p)?;
    check_times(t_grid, 0.0)?;
    if !(gamma >= 0.0 && beta >= 0.0) {
        return Err(Error::arg("gamma and beta must be non-negative"));
    }
    let order = beta + gamma;
    BesselNormSpec::new(order, p).validate()?;
    let values = spectral_series(model, t_grid, f, p, |grid, t, phi, i| {
        bessel_weight(grid, order, i) * (-t * phi).exp()
    })?;
    let alpha = model.alpha();
    let used = fit_mask(t_grid, alpha, f.grid())?;
    let (slope, intercept) = masked_fit(t_grid, &values, &used)?;
    let reference = -gamma / alpha;
    Ok(SlopeReport {
        t_grid: t_grid.to_vec(),
        values,
        used,
        slope,
        intercept,
        reference,
        passes: slope >= reference - SLOPE_SLACK,
    })
}

/// Rate of `||P_t f - f||_p` as `t -> 0`; passes iff the slope is at least
/// `theta/alpha - 0.1` (for `theta = 0`, iff the values stay below `2||f||_p`).
pub fn strong_continuity_probe(
    model: &LevyModel,
    p: f64,
    theta: f64,
    t_grid: &[f64],
    f: &GridFunction,
) -> Result<SlopeReport> {
    check_p(p)?;
    check_times(t_grid, 0.0)?;
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::arg(format!("theta must lie in [0, 1], got {theta}")));
    }
    let values = spectral_series(model, t_grid, f, p, |_, t, phi, _| (-t * phi).exp_m1())?;
    let alpha = model.alpha();
    let used = fit_mask(t_grid, alpha, f.grid())?;
    let (slope, intercept) = masked_fit(t_grid, &values, &used)?;
    let reference = theta / alpha;
    let passes = if theta == 0.0 {
        let bound = 2.0 * f.lp_norm(p) * (1.0 + 1e-9);
        values.iter().all(|v| *v <= bound)
    } else {
        slope >= reference - SLOPE_SLACK
    };
    Ok(SlopeReport {
        t_grid: t_grid.to_vec(),
        values,
        used,
        slope,
        intercept,
        reference,
        passes,
    })
}
