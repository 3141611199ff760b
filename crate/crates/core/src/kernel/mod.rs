//! Heat kernels, semigroups and Bessel-potential norms on periodic grids.
//!
//! All operators are Fourier multipliers. A grid with extent `R` and `n`
//! points per axis has spacing `h = 2R/n` and dual frequencies `pi k / R`,
//! `k = -n/2 .. n/2 - 1`.

mod grid;
mod io;
mod probes;
mod profiles;
mod spacetime;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::levy_model::LevyModel;

pub use grid::{GridFunction, GridSpec, MIN_RESOLUTION};
pub(crate) use grid::{lp_norm_of, Spectrum};
pub use io::{read_binary, read_csv, write_binary, write_csv};
pub use probes::{
    gradient_bound_probe, smoothing_probe, strong_continuity_probe, GradientReport, SlopeReport,
};
pub use profiles::{bump_panel, critical_profile, gaussian_bump, smooth_bump};
pub use spacetime::{mixed_norm, MixedNormSpec, SpaceTimeFunction};

/// Largest admissible `exp(-t Phi)` on the boundary of the frequency box.
pub const NYQUIST_TAIL: f64 = 1e-12;

/// Imaginary residue tolerated when inverting a real symmetric spectrum.
pub const IMAGINARY_TOL: f64 = 1e-8;

/// `Phi` tabulated on the dual grid.
#[derive(Debug, Clone)]
pub struct SymbolGrid {
    grid: GridSpec,
    phi: Vec<f64>,
}

impl SymbolGrid {
    pub fn new(model: &LevyModel, grid: &GridSpec) -> Result<Self> {
        if model.dim() != grid.dim() {
            return Err(Error::arg(format!(
                "model dimension {} differs from grid dimension {}",
                model.dim(),
                grid.dim()
            )));
        }
        let phi = (0..grid.len())
            .into_par_iter()
            .map(|i| model.exponent(&grid.frequency_vector(i), false))
            .collect::<Result<Vec<f64>>>()?;
        Ok(Self {
            grid: grid.clone(),
            phi,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.phi
    }

    /// Largest `exp(-t Phi)` over frequencies on the Nyquist rows.
    pub fn nyquist_tail(&self, t: f64) -> f64 {
        self.phi
            .iter()
            .enumerate()
            .filter(|(i, _)| self.grid.on_nyquist(*i))
            .map(|(_, &p)| (-t * p).exp())
            .fold(0.0, f64::max)
    }

    fn multiplier(&self, t: f64, i: usize) -> f64 {
        (-t * self.phi[i]).exp()
    }
}

fn check_time(t: f64, allow_zero: bool) -> Result<()> {
    let ok = if allow_zero { t >= 0.0 } else { t > 0.0 };
    if ok && t.is_finite() {
        Ok(())
    } else {
        Err(Error::arg(format!("time must be {}, got {t}", if allow_zero { "non-negative" } else { "positive" })))
    }
}

/// Density of `L_t` on the grid by inverse DFT of `exp(-t Phi)`.
pub fn heat_kernel(model: &LevyModel, t: f64, grid: &GridSpec) -> Result<GridFunction> {
    check_time(t, false)?;
    heat_kernel_from(&SymbolGrid::new(model, grid)?, t)
}

/// [`heat_kernel`] with a precomputed symbol table.
pub fn heat_kernel_from(symbol: &SymbolGrid, t: f64) -> Result<GridFunction> {
    check_time(t, false)?;
    let tail = symbol.nyquist_tail(t);
    if tail > NYQUIST_TAIL {
        return Err(Error::Resolution {
            message: format!("exp(-t Phi) at the Nyquist frequency exceeds {NYQUIST_TAIL:e}; refine the grid"),
            tail,
        });
    }
    let grid = &symbol.grid;
    let mut data: Vec<Complex64> = (0..grid.len())
        .map(|i| Complex64::new(grid.shift_sign(i) * symbol.multiplier(t, i), 0.0))
        .collect();
    grid::fft_nd(grid, &mut data, true);
    let scale = 1.0 / grid.volume();
    let mut max_im = 0.0f64;
    let values: Vec<f64> = data
        .iter()
        .map(|c| {
            max_im = max_im.max((c.im * scale).abs());
            c.re * scale
        })
        .collect();
    if max_im > IMAGINARY_TOL {
        return Err(Error::numerical("heat kernel has a non-negligible imaginary part", max_im));
    }
    GridFunction::new(grid.clone(), values)
}

/// `P_t f = p_t * f`, computed spectrally.
pub fn semigroup_apply(model: &LevyModel, t: f64, f: &GridFunction) -> Result<GridFunction> {
    check_time(t, true)?;
    if t == 0.0 {
        return Ok(f.clone());
    }
    semigroup_apply_from(&SymbolGrid::new(model, f.grid())?, t, f)
}

pub fn semigroup_apply_from(symbol: &SymbolGrid, t: f64, f: &GridFunction) -> Result<GridFunction> {
    check_time(t, true)?;
    if symbol.grid != *f.grid() {
        return Err(Error::arg("symbol table and function live on different grids"));
    }
    if t == 0.0 {
        return Ok(f.clone());
    }
    let (values, _) = Spectrum::of(f).synthesize(|i| Complex64::new(symbol.multiplier(t, i), 0.0));
    GridFunction::new(f.grid().clone(), values)
}

/// `(beta, p)` of the norm `||(I - Delta)^{beta/2} f||_p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesselNormSpec {
    pub beta: f64,
    /// `f64::INFINITY` selects the maximum norm.
    pub p: f64,
}

impl BesselNormSpec {
    pub fn new(beta: f64, p: f64) -> Self {
        Self { beta, p }
    }

    fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::arg(format!("beta must be non-negative, got {}", self.beta)));
        }
        if self.p.is_infinite() {
            if self.beta > 0.0 {
                return Err(Error::Unsupported(
                    "Bessel norm with beta > 0 and p = infinity".into(),
                ));
            }
        } else if !(self.p > 1.0) {
            return Err(Error::arg(format!("p must lie in (1, inf], got {}", self.p)));
        }
        Ok(())
    }
}

pub(crate) fn bessel_weight(grid: &GridSpec, beta: f64, i: usize) -> f64 {
    let n2: f64 = grid.frequency_vector(i).iter().map(|v| v * v).sum();
    (1.0 + n2).powf(0.5 * beta)
}

pub fn bessel_norm(f: &GridFunction, spec: BesselNormSpec) -> Result<f64> {
    spec.validate()?;
    if spec.beta == 0.0 {
        return Ok(f.lp_norm(spec.p));
    }
    let grid = f.grid();
    let (values, _) =
        Spectrum::of(f).synthesize(|i| Complex64::new(bessel_weight(grid, spec.beta, i), 0.0));
    Ok(lp_norm_of(&values, grid.cell_volume(), spec.p))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brownian_kernel_is_gaussian() {
        let g = GridSpec::cube(1, 16.0, 1 << 12).unwrap();
        let p = heat_kernel(&LevyModel::brownian(1), 1.0, &g).unwrap();
        let err = (0..g.len())
            .map(|i| {
                let x = g.coordinate(0, i);
                (p.values()[i] - (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()).abs()
            })
            .fold(0.0, f64::max);
        assert!(err < 1e-6, "{err}");
        assert!((p.integral() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let g = GridSpec::cube(1, 16.0, 16).unwrap();
        let e = heat_kernel(&LevyModel::brownian(1), 1e-3, &g).unwrap_err();
        assert!(matches!(e, Error::Resolution { .. }));
        assert!(heat_kernel(&LevyModel::brownian(1), 0.0, &g).is_err());
    }

    #[test]
    fn bessel_norm_rules() {
        let g = GridSpec::cube(1, 8.0, 256).unwrap();
        let f = gaussian_bump(&g, &[0.0], 0.5).unwrap();
        assert_eq!(bessel_norm(&f, BesselNormSpec::new(0.0, 3.0)).unwrap(), f.lp_norm(3.0));
        assert!(matches!(
            bessel_norm(&f, BesselNormSpec::new(1.0, f64::INFINITY)),
            Err(Error::Unsupported(_))
        ));
        let a = bessel_norm(&f, BesselNormSpec::new(0.5, 2.0)).unwrap();
        let b = bessel_norm(&f, BesselNormSpec::new(1.5, 2.0)).unwrap();
        assert!(f.lp_norm(2.0) <= a && a <= b);
    }
}
