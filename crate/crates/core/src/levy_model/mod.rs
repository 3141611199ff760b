//! Lévy noise models with generating triplet `(A, nu, 0)`: Gaussian part,
//! stable-type jump measures and independent superpositions.
//!
//! The symbol follows the convention `E exp(i <xi, L_t>) = exp(-t Phi(xi))`,
//! so `Re Phi >= 0`:
//!
//! ```text
//! Phi(xi) = <xi, A xi> / 2 + int (1 - cos <xi, y>) nu(dy)        (symmetric nu)
//! ```
//!
//! Jump measures are written in polar form
//! `nu(dr, dtheta) = r^{-1-alpha} rho(r) dr mu(dtheta)`; the built-in stable
//! classes are normalized so that the isotropic symbol is exactly `|xi|^alpha`
//! and the cylindrical one is `sum_i |xi_i|^alpha`.

mod gates;
mod radial;
mod spherical;

use std::cell::Cell;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::numerics::{integrate, QuadOptions};

pub use gates::{admissible_pq, krylov_pq_check, krylov_pq_violation, Admissibility};
pub use radial::{stable_radial_constant, RadialModulator, Sandwich, QUAD_REL_TOL};
pub use spherical::{sphere_area, uniform_abs_moment, Atom, SphericalMeasure};

/// Which Lévy measure a jump part carries.
#[derive(Debug, Clone, PartialEq)]
pub enum JumpKind {
    /// Rotation-invariant stable law with symbol `|xi|^alpha`.
    IsotropicStable,
    /// Independent coordinates, symbol `sum_i |xi_i|^alpha`.
    CylindricalStable,
    /// Stable law with an arbitrary (symmetric, spanning) spherical measure.
    GeneralStable { spherical: SphericalMeasure },
    /// `r^{-1-alpha} rho(r) dr mu(dtheta)` with a sandwiched modulator.
    StableType {
        spherical: SphericalMeasure,
        radial: RadialModulator,
    },
    /// Isotropic stable measure damped by `exp(-rate r)`.
    Tempered { rate: f64 },
    /// Isotropic stable measure restricted to `|y| <= 1` and scaled by `level`.
    Truncated { level: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpSpec {
    pub kind: JumpKind,
    pub alpha: f64,
}

impl JumpSpec {
    pub fn new(kind: JumpKind, alpha: f64) -> Self {
        Self { kind, alpha }
    }

    /// Polar description of the Lévy measure in dimension `dim`.
    pub fn measure(&self, dim: usize) -> LevyMeasure {
        let alpha = self.alpha;
        let k = stable_radial_constant(alpha);
        let iso_mass = 1.0 / (k * uniform_abs_moment(dim, alpha));
        let (spherical, radial) = match &self.kind {
            JumpKind::IsotropicStable => (
                SphericalMeasure::Uniform {
                    total_mass: iso_mass,
                },
                RadialModulator::Constant(1.0),
            ),
            JumpKind::CylindricalStable => (
                SphericalMeasure::coordinate_axes(dim, 0.5 / k),
                RadialModulator::Constant(1.0),
            ),
            JumpKind::GeneralStable { spherical } => {
                (spherical.clone(), RadialModulator::Constant(1.0))
            }
            JumpKind::StableType { spherical, radial } => (spherical.clone(), *radial),
            JumpKind::Tempered { rate } => (
                SphericalMeasure::Uniform {
                    total_mass: iso_mass,
                },
                RadialModulator::Exponential { rate: *rate },
            ),
            JumpKind::Truncated { level } => (
                SphericalMeasure::Uniform {
                    total_mass: iso_mass,
                },
                RadialModulator::Indicator {
                    level: *level,
                    radius: 1.0,
                },
            ),
        };
        LevyMeasure {
            dim,
            alpha,
            spherical: spherical.resolved(dim),
            radial,
        }
    }
}

/// Resolved polar form of a jump measure.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyMeasure {
    pub dim: usize,
    pub alpha: f64,
    pub spherical: SphericalMeasure,
    pub radial: RadialModulator,
}

impl LevyMeasure {
    fn validate(&self) -> Result<()> {
        if !(self.alpha > 1.0 && self.alpha < 2.0) {
            return Err(Error::model(format!(
                "jump index alpha = {} outside (1, 2)",
                self.alpha
            )));
        }
        self.radial.validate()?;
        self.spherical.validate(self.dim)?;
        if !self.spherical.spans(self.dim) {
            return Err(Error::model(
                "spherical measure is degenerate: its support does not span R^d",
            ));
        }
        if !self.spherical.is_symmetric() {
            return Err(Error::Unsupported(
                "non-symmetric spherical measures are not supported".into(),
            ));
        }
        Ok(())
    }

    /// Jump part of the symbol through the closed-form radial integrals.
    pub fn exponent(&self, xi: &[f64]) -> Result<f64> {
        self.exponent_with(xi, |s| Ok(self.radial.symbol_closed(s, self.alpha)))
    }

    /// Jump part of the symbol with the radial integral done by adaptive quadrature.
    pub fn exponent_quadrature(&self, xi: &[f64]) -> Result<f64> {
        self.exponent_with(xi, |s| self.radial.symbol_quadrature(s, self.alpha))
    }

    fn exponent_with<F>(&self, xi: &[f64], radial: F) -> Result<f64>
    where
        F: Fn(f64) -> Result<f64>,
    {
        match &self.spherical {
            SphericalMeasure::Atoms(atoms) => {
                let mut sum = 0.0;
                for a in atoms {
                    let s: f64 = a.direction.iter().zip(xi).map(|(e, x)| e * x).sum();
                    sum += a.weight * radial(s)?;
                }
                Ok(sum)
            }
            SphericalMeasure::Uniform { total_mass } => {
                let norm = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm == 0.0 {
                    return Ok(0.0);
                }
                // rotation invariance reduces the sphere to the polar angle to xi;
                // the integrand is symmetric about phi = pi/2
                let d = self.dim;
                let polar_weight = sphere_area(d - 1) / sphere_area(d);
                let failure = Cell::new(None);
                let q = integrate(
                    |phi: f64| match radial(norm * phi.cos()) {
                        Ok(v) => v * phi.sin().powi(d as i32 - 2),
                        Err(e) => {
                            failure.set(Some(e.to_string()));
                            0.0
                        }
                    },
                    0.0,
                    PI / 2.0,
                    QuadOptions::new(1e-14, QUAD_REL_TOL * 1e-2),
                )?;
                if let Some(msg) = failure.take() {
                    return Err(Error::numerical(
                        format!("radial integral inside polar reduction: {msg}"),
                        q.error,
                    ));
                }
                Ok(2.0 * total_mass * polar_weight * q.value)
            }
        }
    }

    /// Closed form of the isotropic constant-modulator case, `c |xi|^alpha`.
    fn isotropic_coefficient(&self) -> Option<f64> {
        match (&self.spherical, self.radial) {
            (SphericalMeasure::Uniform { total_mass }, RadialModulator::Constant(c)) => Some(
                c * total_mass
                    * stable_radial_constant(self.alpha)
                    * uniform_abs_moment(self.dim, self.alpha),
            ),
            _ => None,
        }
    }
}

/// Gaussian part `A = sigma sigma^T`, stored with its lower Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPart {
    pub cov: DMatrix<f64>,
    pub chol: DMatrix<f64>,
}

impl GaussianPart {
    fn new(cov: DMatrix<f64>) -> Result<Option<Self>> {
        let d = cov.nrows();
        if cov.ncols() != d {
            return Err(Error::model("covariance must be square"));
        }
        if cov.iter().any(|v| !v.is_finite()) {
            return Err(Error::model("covariance has non-finite entries"));
        }
        let scale = cov.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..d {
            for j in 0..i {
                if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 * scale.max(1.0) {
                    return Err(Error::model("covariance is not symmetric"));
                }
            }
        }
        if scale == 0.0 {
            return Ok(None);
        }
        let eig = nalgebra::SymmetricEigen::new(cov.clone());
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(min > 1e-14 * scale) {
            return Err(Error::model(format!(
                "covariance must be either zero or positive definite (smallest eigenvalue {min:e})"
            )));
        }
        let chol = nalgebra::Cholesky::new(cov.clone())
            .ok_or_else(|| Error::model("covariance Cholesky factorization failed"))?
            .l();
        Ok(Some(Self { cov, chol }))
    }
}

/// A Lévy process specification: `(A, nu, 0)` plus independent components.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyModel {
    dim: usize,
    alpha: f64,
    gaussian: Option<GaussianPart>,
    jump: Option<JumpSpec>,
    measure: Option<LevyMeasure>,
    components: Vec<LevyModel>,
}

impl LevyModel {
    /// Builds and validates a single-triplet model.
    pub fn new(dim: usize, gaussian_cov: Option<DMatrix<f64>>, jump: Option<JumpSpec>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::model("dimension must be positive"));
        }
        let gaussian = match gaussian_cov {
            Some(cov) => {
                if cov.nrows() != dim {
                    return Err(Error::model(format!(
                        "covariance is {}x{} but dimension is {dim}",
                        cov.nrows(),
                        cov.ncols()
                    )));
                }
                GaussianPart::new(cov)?
            }
            None => None,
        };
        let measure = match &jump {
            Some(j) => {
                let m = j.measure(dim);
                m.validate()?;
                Some(m)
            }
            None => None,
        };
        if gaussian.is_none() && measure.is_none() {
            return Err(Error::model(
                "model needs a non-zero Gaussian part or a jump measure",
            ));
        }
        let alpha = if gaussian.is_some() {
            2.0
        } else {
            jump.as_ref().map(|j| j.alpha).unwrap_or(2.0)
        };
        Ok(Self {
            dim,
            alpha,
            gaussian,
            jump,
            measure,
            components: Vec::new(),
        })
    }

    /// Standard Brownian motion, `A = I`.
    pub fn brownian(dim: usize) -> Self {
        Self::new(dim, Some(DMatrix::identity(dim, dim)), None).expect("identity covariance is valid")
    }

    pub fn gaussian(cov: DMatrix<f64>) -> Result<Self> {
        Self::new(cov.nrows(), Some(cov), None)
    }

    pub fn jump_only(dim: usize, kind: JumpKind, alpha: f64) -> Result<Self> {
        Self::new(dim, None, Some(JumpSpec::new(kind, alpha)))
    }

    pub fn isotropic_stable(dim: usize, alpha: f64) -> Result<Self> {
        Self::jump_only(dim, JumpKind::IsotropicStable, alpha)
    }

    pub fn cylindrical_stable(dim: usize, alpha: f64) -> Result<Self> {
        Self::jump_only(dim, JumpKind::CylindricalStable, alpha)
    }

    pub fn tempered_stable(dim: usize, alpha: f64, rate: f64) -> Result<Self> {
        Self::jump_only(dim, JumpKind::Tempered { rate }, alpha)
    }

    pub fn truncated_stable(dim: usize, alpha: f64, level: f64) -> Result<Self> {
        Self::jump_only(dim, JumpKind::Truncated { level }, alpha)
    }

    /// Sum of independent processes; the index is the largest component index.
    pub fn superposition(components: Vec<LevyModel>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::model("superposition needs at least one component"))?;
        let dim = first.dim;
        if components.iter().any(|c| c.dim != dim) {
            return Err(Error::model("superposition components differ in dimension"));
        }
        let alpha = components.iter().map(|c| c.alpha).fold(f64::MIN, f64::max);
        Ok(Self {
            dim,
            alpha,
            gaussian: None,
            jump: None,
            measure: None,
            components,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn gaussian_part(&self) -> Option<&GaussianPart> {
        self.gaussian.as_ref()
    }

    pub fn jump(&self) -> Option<&JumpSpec> {
        self.jump.as_ref()
    }

    pub fn jump_measure(&self) -> Option<&LevyMeasure> {
        self.measure.as_ref()
    }

    pub fn components(&self) -> &[LevyModel] {
        &self.components
    }

    pub fn is_superposition(&self) -> bool {
        !self.components.is_empty()
    }

    /// Every non-superposition part, depth first.
    pub fn leaves(&self) -> Vec<&LevyModel> {
        if self.components.is_empty() {
            vec![self]
        } else {
            self.components.iter().flat_map(|c| c.leaves()).collect()
        }
    }

    fn check_xi(&self, xi: &[f64]) -> Result<()> {
        if xi.len() != self.dim {
            return Err(Error::arg(format!(
                "frequency has length {} (dimension {})",
                xi.len(),
                self.dim
            )));
        }
        if xi.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("frequency must be finite"));
        }
        Ok(())
    }

    /// `Phi(xi)` with `E exp(i <xi, L_t>) = exp(-t Phi(xi))`.
    pub fn symbol(&self, xi: &[f64]) -> Result<Complex64> {
        self.check_xi(xi)?;
        Ok(Complex64::new(self.exponent(xi, false)?, 0.0))
    }

    /// Same as [`symbol`](Self::symbol) with every radial integral evaluated by
    /// adaptive quadrature instead of its closed form.
    pub fn symbol_quadrature(&self, xi: &[f64]) -> Result<Complex64> {
        self.check_xi(xi)?;
        Ok(Complex64::new(self.exponent(xi, true)?, 0.0))
    }

    /// Real part of the symbol; callers must pass a frequency of length `dim`.
    pub(crate) fn exponent(&self, xi: &[f64], quadrature: bool) -> Result<f64> {
        if !self.components.is_empty() {
            let mut sum = 0.0;
            for c in &self.components {
                sum += c.exponent(xi, quadrature)?;
            }
            return Ok(sum);
        }
        let mut value = 0.0;
        if let Some(g) = &self.gaussian {
            let mut q = 0.0;
            for i in 0..self.dim {
                for j in 0..self.dim {
                    q += xi[i] * g.cov[(i, j)] * xi[j];
                }
            }
            value += 0.5 * q;
        }
        if let Some(m) = &self.measure {
            value += if quadrature {
                m.exponent_quadrature(xi)?
            } else if let Some(c) = m.isotropic_coefficient() {
                let norm2: f64 = xi.iter().map(|v| v * v).sum();
                c * norm2.powf(0.5 * m.alpha)
            } else {
                m.exponent(xi)?
            };
        }
        Ok(value)
    }

    /// The sandwich constants of the first jump measure found, if any.
    pub fn sandwich(&self) -> Option<Sandwich> {
        self.leaves()
            .into_iter()
            .find_map(|l| l.measure.as_ref().map(|m| m.radial.sandwich()))
    }

    /// Structural status of the standing assumptions for this model class.
    pub fn structural_checks(&self) -> StructuralChecks {
        let leaves = self.leaves();
        let jump_spans = leaves
            .iter()
            .filter_map(|l| l.measure.as_ref())
            .all(|m| m.spherical.spans(m.dim));
        StructuralChecks {
            index_in_range: self.alpha > 1.0 && self.alpha <= 2.0,
            gaussian_dichotomy: true,
            jump_measure_spans: jump_spans,
            symmetric: true,
            alpha: self.alpha,
        }
    }
}

/// Outcome of [`LevyModel::structural_checks`]. Construction already enforces
/// each flag; the report exists so callers can print it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructuralChecks {
    pub index_in_range: bool,
    /// `A` is either zero or positive definite.
    pub gaussian_dichotomy: bool,
    /// The support of every jump measure spans `R^d`.
    pub jump_measure_spans: bool,
    pub symmetric: bool,
    pub alpha: f64,
}

/// Result of [`symbol_lower_bound_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowerBoundReport {
    pub min_ratio: f64,
    /// Sampled frequencies satisfy `|lambda| > radius_floor = 1 / C`.
    pub radius_floor: f64,
    pub samples: usize,
}

impl LowerBoundReport {
    pub fn passes(&self) -> bool {
        self.min_ratio > 0.0
    }
}

/// Minimum of `Re Phi(lambda) / |lambda|^alpha` over random `|lambda| > 1/C`.
pub fn symbol_lower_bound_check(model: &LevyModel, samples: usize) -> Result<LowerBoundReport> {
    let sandwich = model.sandwich().ok_or_else(|| {
        Error::arg("lower-bound check needs a stable-type jump measure")
    })?;
    let floor = 1.0 / sandwich.c;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_b0d5);
    let d = model.dim();
    let mut min_ratio = f64::INFINITY;
    let mut xi = vec![0.0; d];
    for _ in 0..samples {
        let mut norm = 0.0;
        while norm < 1e-8 {
            for v in xi.iter_mut() {
                *v = rng.sample(rand_distr::StandardNormal);
            }
            norm = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        }
        // radii log-uniform over (1/C, 100/C]
        let radius = floor * 100f64.powf(1.0 - rng.random::<f64>());
        for v in xi.iter_mut() {
            *v *= radius / norm;
        }
        let ratio = model.exponent(&xi, false)? / radius.powf(model.alpha());
        min_ratio = min_ratio.min(ratio);
    }
    Ok(LowerBoundReport {
        min_ratio,
        radius_floor: floor,
        samples,
    })
}

/// `Gamma(1 + 1/alpha) / pi`: density at the origin of the one-dimensional
/// stable law with symbol `|xi|^alpha` at `t = 1`.
pub fn stable_density_at_origin(alpha: f64) -> f64 {
    gamma(1.0 + 1.0 / alpha) / PI
}
