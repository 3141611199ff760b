//! Weighted particle clouds: Wasserstein distances, moments and kernel
//! density estimates.

mod io;
mod transport;

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::kernel::{GridFunction, GridSpec};

pub use io::{read_binary, read_csv, write_binary, write_csv};

/// Largest `N * M` solved by the exact transport solver.
pub const EXACT_PAIR_BUDGET: usize = 1_000_000;

/// Projections used by the sliced fallback.
pub const SLICED_PROJECTIONS: usize = 256;

const SLICED_SEED: u64 = 0x51ce_d0_0d;

/// Weighted particles, row-major `N x dim`, weights summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    dim: usize,
    particles: Vec<f64>,
    weights: Arc<[f64]>,
}

impl EmpiricalMeasure {
    pub fn new(dim: usize, particles: Vec<f64>, weights: Option<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::arg("particle dimension must be positive"));
        }
        if particles.is_empty() || particles.len() % dim != 0 {
            return Err(Error::arg(format!(
                "{} coordinates do not form a non-empty cloud in dimension {dim}",
                particles.len()
            )));
        }
        if particles.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("particle positions must be finite"));
        }
        let n = particles.len() / dim;
        let weights = match weights {
            None => vec![1.0 / n as f64; n],
            Some(w) => {
                if w.len() != n {
                    return Err(Error::arg(format!("{} weights for {n} particles", w.len())));
                }
                if w.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                    return Err(Error::arg("weights must be non-negative"));
                }
                let total: f64 = crate::numerics::pairwise_sum(&w);
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::arg(format!("weights sum to {total}, not 1")));
                }
                w
            }
        };
        Ok(Self {
            dim,
            particles,
            weights: weights.into(),
        })
    }

    /// Shares an already validated weight vector between many clouds.
    pub(crate) fn with_shared_weights(dim: usize, particles: Vec<f64>, weights: Arc<[f64]>) -> Result<Self> {
        if particles.len() != dim * weights.len() {
            return Err(Error::arg("particle count differs from the shared weights"));
        }
        if particles.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("particle positions must be finite"));
        }
        Ok(Self {
            dim,
            particles,
            weights,
        })
    }

    pub(crate) fn shared_weights(&self) -> Arc<[f64]> {
        self.weights.clone()
    }

    /// Uniform weights.
    pub fn uniform(dim: usize, particles: Vec<f64>) -> Result<Self> {
        Self::new(dim, particles, None)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::arg("ragged particle rows"));
        }
        Self::uniform(dim, rows.concat())
    }

    /// Weights are renormalized to sum to one.
    pub fn weighted(dim: usize, particles: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::arg("weights must have positive finite total"));
        }
        let w: Vec<f64> = weights.iter().map(|v| v / total).collect();
        let err = crate::numerics::pairwise_sum(&w) - 1.0;
        let mut w = w;
        // push the rounding residue onto the largest weight
        if let Some(k) = (0..w.len()).max_by(|&a, &b| w[a].total_cmp(&w[b])) {
            w[k] -= err;
        }
        Self::new(dim, particles, Some(w))
    }

    pub fn point_mass(x: &[f64]) -> Result<Self> {
        Self::uniform(x.len(), x.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.particles[i * self.dim..(i + 1) * self.dim]
    }

    pub fn particles(&self) -> &[f64] {
        &self.particles
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_uniform(&self) -> bool {
        let w0 = self.weights[0];
        self.weights.iter().all(|w| *w == w0)
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (i, w) in self.weights.iter().enumerate() {
            for (a, x) in m.iter_mut().zip(self.particle(i)) {
                *a += w * x;
            }
        }
        m
    }

    /// Weighted standard deviation per axis.
    pub fn std_dev(&self) -> Vec<f64> {
        let mean = self.mean();
        let mut v = vec![0.0; self.dim];
        for (i, w) in self.weights.iter().enumerate() {
            for a in 0..self.dim {
                let c = self.particle(i)[a] - mean[a];
                v[a] += w * c * c;
            }
        }
        v.into_iter().map(f64::sqrt).collect()
    }

    pub fn shifted(&self, v: &[f64]) -> Result<Self> {
        if v.len() != self.dim {
            return Err(Error::arg("shift dimension differs from cloud dimension"));
        }
        let particles = self
            .particles
            .chunks(self.dim)
            .flat_map(|p| p.iter().zip(v).map(|(x, s)| x + s).collect::<Vec<_>>())
            .collect();
        Ok(Self {
            dim: self.dim,
            particles,
            weights: self.weights.clone(),
        })
    }

    /// Coordinates along one axis.
    pub fn axis(&self, a: usize) -> Vec<f64> {
        self.particles.chunks(self.dim).map(|p| p[a]).collect()
    }
}

/// How a Wasserstein value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportMethod {
    /// Monotone (quantile) coupling, exact in one dimension.
    Quantile,
    /// Exact optimal coupling from the min-cost-flow solver.
    Exact,
    /// Sliced estimate over this many random projections.
    Sliced { projections: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wasserstein {
    pub value: f64,
    pub method: TransportMethod,
}

impl Wasserstein {
    pub fn is_approximate(&self) -> bool {
        matches!(self.method, TransportMethod::Sliced { .. })
    }
}

fn check_pair(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, theta: f64) -> Result<()> {
    if !(theta >= 1.0 && theta.is_finite()) {
        return Err(Error::arg(format!("theta must be >= 1, got {theta}")));
    }
    if mu.dim != nu.dim {
        return Err(Error::arg("measures live in different dimensions"));
    }
    Ok(())
}

/// `W_theta` by the quantile coupling of the first coordinate; requires `dim = 1`.
pub fn wasserstein_quantile(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, theta: f64) -> Result<f64> {
    check_pair(mu, nu, theta)?;
    if mu.dim != 1 {
        return Err(Error::arg("quantile coupling needs one-dimensional measures"));
    }
    let a = transport::sorted_line(mu.particles.iter().copied(), &mu.weights);
    let b = transport::sorted_line(nu.particles.iter().copied(), &nu.weights);
    Ok(transport::quantile_cost(&a, &b, theta).powf(1.0 / theta))
}

/// `W_theta` by the exact min-cost-flow solver, any dimension and size.
pub fn wasserstein_exact(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, theta: f64) -> Result<f64> {
    check_pair(mu, nu, theta)?;
    Ok(transport::exact_cost(mu, nu, theta).max(0.0).powf(1.0 / theta))
}

/// Sliced `W_theta` estimate (a lower bound of `W_theta` up to Monte Carlo error).
pub fn wasserstein_sliced(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    theta: f64,
    projections: usize,
    seed: u64,
) -> Result<f64> {
    check_pair(mu, nu, theta)?;
    if projections == 0 {
        return Err(Error::arg("sliced estimate needs at least one projection"));
    }
    Ok(transport::sliced_cost(mu, nu, theta, projections, seed).powf(1.0 / theta))
}

/// `W_theta(mu, nu)`: quantile coupling in one dimension, exact transport when
/// `N M <= EXACT_PAIR_BUDGET`, otherwise a flagged sliced estimate.
pub fn wasserstein_theta(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, theta: f64) -> Result<Wasserstein> {
    check_pair(mu, nu, theta)?;
    if mu.dim == 1 {
        return Ok(Wasserstein {
            value: wasserstein_quantile(mu, nu, theta)?,
            method: TransportMethod::Quantile,
        });
    }
    if mu.len().saturating_mul(nu.len()) <= EXACT_PAIR_BUDGET {
        return Ok(Wasserstein {
            value: wasserstein_exact(mu, nu, theta)?,
            method: TransportMethod::Exact,
        });
    }
    Ok(Wasserstein {
        value: wasserstein_sliced(mu, nu, theta, SLICED_PROJECTIONS, SLICED_SEED)?,
        method: TransportMethod::Sliced {
            projections: SLICED_PROJECTIONS,
        },
    })
}

/// `sum_i w_i |x_i|^theta`.
pub fn theta_moment(mu: &EmpiricalMeasure, theta: f64) -> f64 {
    let terms: Vec<f64> = (0..mu.len())
        .map(|i| {
            let r = mu.particle(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            mu.weights[i] * r.powf(theta)
        })
        .collect();
    crate::numerics::pairwise_sum(&terms)
}

/// Kernel bandwidth choice.
#[derive(Debug, Clone, PartialEq)]
pub enum Bandwidth {
    /// Silverman's rule per axis.
    Auto,
    /// Same width on every axis.
    Fixed(f64),
    PerAxis(Vec<f64>),
}

/// Silverman bandwidths `sigma_a (4 / ((d + 2) n_eff))^{1/(d+4)}`, with
/// `n_eff = 1 / sum w_i^2`.
pub fn silverman_bandwidth(mu: &EmpiricalMeasure) -> Vec<f64> {
    let d = mu.dim as f64;
    let n_eff = 1.0 / mu.weights.iter().map(|w| w * w).sum::<f64>();
    let factor = (4.0 / ((d + 2.0) * n_eff)).powf(1.0 / (d + 4.0));
    mu.std_dev().into_iter().map(|s| s * factor).collect()
}

/// Mass allowed outside the grid box before a coverage error.
pub const COVERAGE_TOL: f64 = 1e-6;

/// Gaussian kernel density on a periodic grid: linear binning followed by a
/// spectral Gaussian smoothing.
pub fn density_estimate(mu: &EmpiricalMeasure, grid: &GridSpec, bandwidth: Bandwidth) -> Result<GridFunction> {
    if grid.dim() != mu.dim {
        return Err(Error::arg("grid dimension differs from cloud dimension"));
    }
    let widths = match bandwidth {
        Bandwidth::Auto => silverman_bandwidth(mu),
        Bandwidth::Fixed(h) => vec![h; mu.dim],
        Bandwidth::PerAxis(h) => h,
    };
    if widths.len() != mu.dim || widths.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
        return Err(Error::arg(format!(
            "bandwidth {widths:?} is not positive on every axis (a degenerate cloud has no automatic bandwidth)"
        )));
    }
    let d = mu.dim;
    let mut binned = vec![0.0; grid.len()];
    let mut outside = 0.0;
    let mut base = vec![0usize; d];
    let mut frac = vec![0.0; d];
    for i in 0..mu.len() {
        let x = mu.particle(i);
        let w = mu.weights[i];
        let mut inside = true;
        for a in 0..d {
            let r = grid.extent()[a];
            if !(x[a] >= -r && x[a] < r) {
                inside = false;
                break;
            }
            let s = (x[a] + r) / grid.spacing(a);
            let j = (s.floor() as usize).min(grid.resolution()[a] - 1);
            base[a] = j;
            frac[a] = s - j as f64;
        }
        if !inside {
            outside += w;
            continue;
        }
        for corner in 0..(1usize << d) {
            let mut weight = w;
            let mut flat = 0;
            for a in 0..d {
                let bit = (corner >> a) & 1;
                let n = grid.resolution()[a];
                weight *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
                flat = flat * n + (base[a] + bit) % n;
            }
            binned[flat] += weight;
        }
    }
    if outside > COVERAGE_TOL {
        return Err(Error::Coverage {
            outside_mass: outside,
        });
    }
    let cell = grid.cell_volume();
    let raw = GridFunction::new(grid.clone(), binned.iter().map(|m| m / cell).collect())?;
    let spectrum = crate::kernel::Spectrum::of(&raw);
    let (values, _) = spectrum.synthesize(|i| {
        let xi = grid.frequency_vector(i);
        let e: f64 = xi.iter().zip(&widths).map(|(k, h)| k * k * h * h).sum();
        Complex64::new((-0.5 * e).exp(), 0.0)
    });
    GridFunction::new(grid.clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_must_sum_to_one() {
        assert!(EmpiricalMeasure::new(1, vec![0.0, 1.0], Some(vec![0.5, 0.6])).is_err());
        assert!(EmpiricalMeasure::new(2, vec![0.0, 1.0, 2.0], None).is_err());
        let m = EmpiricalMeasure::weighted(1, vec![0.0, 1.0, 2.0], vec![1.0, 1.0, 1.0]).unwrap();
        assert!((m.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn single_particle_distance_is_norm() {
        let a = EmpiricalMeasure::point_mass(&[0.0, 0.0]).unwrap();
        let b = EmpiricalMeasure::point_mass(&[3.0, 4.0]).unwrap();
        for theta in [1.0, 1.5, 3.0] {
            let w = wasserstein_theta(&a, &b, theta).unwrap();
            assert!((w.value - 5.0).abs() < 1e-12);
            assert_eq!(w.method, TransportMethod::Exact);
        }
        assert!(wasserstein_theta(&a, &b, 0.5).is_err());
    }
}
