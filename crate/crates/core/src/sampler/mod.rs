//! Increments of Lévy processes.
//!
//! Stable parts with constant radial density are drawn exactly (one
//! Chambers–Mallows–Stuck draw per antipodal atom pair, or a sub-Gaussian
//! mixture for the rotation-invariant law). Other radial densities are split
//! at `small_jump_cutoff`: jumps above it form a compound Poisson process
//! thinned from the envelope `sup(rho) r^{-1-alpha}`, and jumps below it are
//! replaced by a Gaussian with the same covariance.

mod stable;

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::levy_model::{
    stable_radial_constant, uniform_abs_moment, LevyModel, RadialModulator, SphericalMeasure,
};
use crate::numerics::{fit_loglog, LineFit};

pub use stable::{positive_stable, symmetric_stable};

/// Default threshold below which jumps are replaced by a Gaussian.
pub const DEFAULT_SMALL_JUMP_CUTOFF: f64 = 0.05;

/// Expected jumps per increment above which sampling is refused.
const MAX_EXPECTED_JUMPS: f64 = 1e8;

/// Rejection attempts per accepted jump before giving up.
const REJECTION_BUDGET: usize = 10_000;

#[derive(Debug, Clone)]
enum Directions {
    Atoms { dirs: Vec<Vec<f64>>, cumulative: Vec<f64> },
    Uniform,
}

#[derive(Debug, Clone)]
struct CompoundPoisson {
    alpha: f64,
    cutoff: f64,
    radial: RadialModulator,
    /// Envelope intensity per unit time, spherical mass included.
    rate: f64,
    directions: Directions,
    /// Cholesky factor of the small-jump covariance per unit time.
    small_chol: Option<DMatrix<f64>>,
    /// `mu(S) int_0^cutoff r^{3-alpha} rho(r) dr`.
    fourth_moment: f64,
}

#[derive(Debug, Clone)]
enum Part {
    Gaussian { chol: DMatrix<f64> },
    /// Independent one-dimensional stable draws along fixed directions.
    Rays { alpha: f64, rays: Vec<(Vec<f64>, f64)> },
    /// Rotation-invariant stable law with symbol `scale^alpha |xi|^alpha`.
    Isotropic { alpha: f64, scale: f64 },
    CompoundPoisson(CompoundPoisson),
}

/// Precomputed sampling recipe for one model and cutoff.
#[derive(Debug, Clone)]
pub struct SamplerPlan {
    dim: usize,
    cutoff: f64,
    parts: Vec<Part>,
}

impl SamplerPlan {
    pub fn new(model: &LevyModel, small_jump_cutoff: f64) -> Result<Self> {
        if !(small_jump_cutoff > 0.0 && small_jump_cutoff <= 1.0) {
            return Err(Error::arg(format!(
                "small-jump cutoff {small_jump_cutoff} outside (0, 1]"
            )));
        }
        let dim = model.dim();
        let mut parts = Vec::new();
        for leaf in model.leaves() {
            if let Some(g) = leaf.gaussian_part() {
                parts.push(Part::Gaussian { chol: g.chol.clone() });
            }
            let Some(m) = leaf.jump_measure() else {
                continue;
            };
            let alpha = m.alpha;
            let k = stable_radial_constant(alpha);
            match (&m.spherical, m.radial) {
                (SphericalMeasure::Uniform { total_mass }, RadialModulator::Constant(c)) => {
                    let coeff = c * total_mass * k * uniform_abs_moment(dim, alpha);
                    parts.push(Part::Isotropic {
                        alpha,
                        scale: coeff.powf(1.0 / alpha),
                    });
                }
                (atoms @ SphericalMeasure::Atoms(_), RadialModulator::Constant(c)) => {
                    let rays = atoms
                        .antipodal_pairs()
                        .into_iter()
                        .map(|(dir, w)| (dir, (2.0 * w * c * k).powf(1.0 / alpha)))
                        .collect();
                    parts.push(Part::Rays { alpha, rays });
                }
                (spherical, radial) => {
                    let cutoff = small_jump_cutoff;
                    let mass = spherical.total_mass();
                    let variance = radial.lower_moment(cutoff, alpha, 2.0);
                    let cov = spherical.second_moment(dim) * variance;
                    let small_chol = if variance > 0.0 {
                        Some(
                            nalgebra::Cholesky::new(cov)
                                .ok_or_else(|| {
                                    Error::numerical("small-jump covariance not positive definite", 0.0)
                                })?
                                .l(),
                        )
                    } else {
                        None
                    };
                    let directions = match spherical {
                        SphericalMeasure::Uniform { .. } => Directions::Uniform,
                        SphericalMeasure::Atoms(atoms) => {
                            let mut acc = 0.0;
                            let cumulative = atoms
                                .iter()
                                .map(|a| {
                                    acc += a.weight / mass;
                                    acc
                                })
                                .collect();
                            Directions::Atoms {
                                dirs: atoms.iter().map(|a| a.direction.clone()).collect(),
                                cumulative,
                            }
                        }
                    };
                    parts.push(Part::CompoundPoisson(CompoundPoisson {
                        alpha,
                        cutoff,
                        radial,
                        rate: mass * radial.envelope_rate(cutoff, alpha),
                        directions,
                        small_chol,
                        fourth_moment: mass * radial.lower_moment(cutoff, alpha, 4.0),
                    }));
                }
            }
        }
        Ok(Self {
            dim,
            cutoff: small_jump_cutoff,
            parts,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    /// True when some part uses the small-jump Gaussian approximation.
    pub fn is_approximate(&self) -> bool {
        self.parts
            .iter()
            .any(|p| matches!(p, Part::CompoundPoisson(_)))
    }

    /// Bound on `|E exp(i<xi, L_t>) - exp(-t Phi(xi))|` caused by the
    /// small-jump replacement: `t |xi|^4 / 24 * int_{|y| <= cutoff} |y|^4 nu(dy)`.
    pub fn cutoff_bias(&self, xi: &[f64], t: f64) -> f64 {
        let n2: f64 = xi.iter().map(|v| v * v).sum();
        self.parts
            .iter()
            .map(|p| match p {
                Part::CompoundPoisson(cp) => t * n2 * n2 / 24.0 * cp.fourth_moment,
                _ => 0.0,
            })
            .sum()
    }

    fn add_increment<R: Rng>(&self, dt: f64, rng: &mut R, out: &mut [f64]) -> Result<()> {
        let d = self.dim;
        for part in &self.parts {
            match part {
                Part::Gaussian { chol } => add_correlated_normal(chol, dt.sqrt(), rng, out),
                Part::Rays { alpha, rays } => {
                    let step = dt.powf(1.0 / alpha);
                    for (dir, scale) in rays {
                        let s = scale * step * symmetric_stable(*alpha, rng);
                        for (o, e) in out.iter_mut().zip(dir) {
                            *o += s * e;
                        }
                    }
                }
                Part::Isotropic { alpha, scale } => {
                    let step = scale * dt.powf(1.0 / alpha);
                    if d == 1 {
                        out[0] += step * symmetric_stable(*alpha, rng);
                    } else {
                        let mix = (2.0 * positive_stable(alpha / 2.0, rng)).sqrt();
                        for o in out.iter_mut() {
                            let z: f64 = rng.sample(StandardNormal);
                            *o += step * mix * z;
                        }
                    }
                }
                Part::CompoundPoisson(cp) => cp.add(dt, d, rng, out)?,
            }
        }
        Ok(())
    }
}

fn add_correlated_normal<R: Rng>(chol: &DMatrix<f64>, scale: f64, rng: &mut R, out: &mut [f64]) {
    let d = out.len();
    let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    for i in 0..d {
        let mut s = 0.0;
        for j in 0..=i {
            s += chol[(i, j)] * z[j];
        }
        out[i] += scale * s;
    }
}

impl CompoundPoisson {
    fn add<R: Rng>(&self, dt: f64, d: usize, rng: &mut R, out: &mut [f64]) -> Result<()> {
        if let Some(chol) = &self.small_chol {
            add_correlated_normal(chol, dt.sqrt(), rng, out);
        }
        let lambda = self.rate * dt;
        if lambda <= 0.0 {
            return Ok(());
        }
        if lambda > MAX_EXPECTED_JUMPS {
            return Err(Error::numerical(
                format!("{lambda:e} expected jumps per increment; raise the cutoff or shorten dt"),
                lambda,
            ));
        }
        let poisson =
            Poisson::new(lambda).map_err(|e| Error::numerical(format!("poisson: {e}"), lambda))?;
        let count = poisson.sample(rng) as u64;
        let sup = self.radial.sup();
        let support = self.radial.support_radius();
        let lo = self.cutoff.powf(-self.alpha);
        let hi = if support.is_finite() {
            support.powf(-self.alpha)
        } else {
            0.0
        };
        let mut dir = vec![0.0; d];
        for _ in 0..count {
            // thinning: radius from the envelope, accepted with rho(r)/sup(rho);
            // a rejected proposal is a discarded envelope jump, not a retry
            let u: f64 = rng.random();
            let r = (lo - u * (lo - hi)).powf(-1.0 / self.alpha);
            let accept: f64 = rng.random();
            if accept * sup >= self.radial.value(r) {
                continue;
            }
            self.direction(rng, &mut dir)?;
            for (o, e) in out.iter_mut().zip(&dir) {
                *o += r * e;
            }
        }
        Ok(())
    }

    fn direction<R: Rng>(&self, rng: &mut R, dir: &mut [f64]) -> Result<()> {
        match &self.directions {
            Directions::Atoms { dirs, cumulative } => {
                let u: f64 = rng.random::<f64>() * cumulative.last().copied().unwrap_or(1.0);
                let i = cumulative.partition_point(|&c| c <= u).min(dirs.len() - 1);
                dir.copy_from_slice(&dirs[i]);
                Ok(())
            }
            Directions::Uniform => {
                for _ in 0..REJECTION_BUDGET {
                    let mut n2 = 0.0;
                    for v in dir.iter_mut() {
                        *v = rng.sample(StandardNormal);
                        n2 += *v * *v;
                    }
                    if n2 > 1e-300 {
                        let n = n2.sqrt();
                        dir.iter_mut().for_each(|v| *v /= n);
                        return Ok(());
                    }
                }
                Err(Error::numerical("direction sampler exhausted its budget", 0.0))
            }
        }
    }
}

/// Deterministic stream of increments identified by `(seed, stream_id)`.
#[derive(Debug, Clone)]
pub struct IncrementStream {
    plan: Arc<SamplerPlan>,
    rng: ChaCha8Rng,
    seed: u64,
    stream_id: u64,
}

impl IncrementStream {
    pub fn new(model: &LevyModel, seed: u64, stream_id: u64) -> Result<Self> {
        Self::with_cutoff(model, seed, stream_id, DEFAULT_SMALL_JUMP_CUTOFF)
    }

    pub fn with_cutoff(model: &LevyModel, seed: u64, stream_id: u64, cutoff: f64) -> Result<Self> {
        Ok(Self::from_plan(
            Arc::new(SamplerPlan::new(model, cutoff)?),
            seed,
            stream_id,
        ))
    }

    /// Shares a precomputed plan; cheap enough to call once per particle.
    pub fn from_plan(plan: Arc<SamplerPlan>, seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            plan,
            rng,
            seed,
            stream_id,
        }
    }

    pub fn plan(&self) -> &Arc<SamplerPlan> {
        &self.plan
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn dim(&self) -> usize {
        self.plan.dim
    }

    /// One draw of `L_dt`.
    pub fn sample_increment(&mut self, dt: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.plan.dim];
        self.sample_increment_into(dt, &mut out)?;
        Ok(out)
    }

    /// Writes one draw of `L_dt` into `out` (overwriting it).
    pub fn sample_increment_into(&mut self, dt: f64, out: &mut [f64]) -> Result<()> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::arg(format!("time step must be positive, got {dt}")));
        }
        if out.len() != self.plan.dim {
            return Err(Error::arg("output buffer length differs from model dimension"));
        }
        out.fill(0.0);
        self.plan.add_increment(dt, &mut self.rng, out)
    }
}

/// Increments of one path over a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathGrid {
    pub times: Vec<f64>,
    pub dim: usize,
    /// Row-major `(times.len() - 1) x dim`.
    pub increments: Vec<f64>,
}

impl PathGrid {
    pub fn num_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn increment(&self, k: usize) -> &[f64] {
        &self.increments[k * self.dim..(k + 1) * self.dim]
    }

    /// Path values `L_{t_k}` starting from 0.
    pub fn positions(&self) -> Vec<Vec<f64>> {
        let mut x = vec![0.0; self.dim];
        let mut out = vec![x.clone()];
        for k in 0..self.num_steps() {
            for (xi, inc) in x.iter_mut().zip(self.increment(k)) {
                *xi += inc;
            }
            out.push(x.clone());
        }
        out
    }
}

pub fn sample_path(stream: &mut IncrementStream, times: &[f64]) -> Result<PathGrid> {
    if times.len() < 2 || times[0] != 0.0 {
        return Err(Error::arg("times must start at 0 and have at least two entries"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
        return Err(Error::arg("times must be strictly increasing and finite"));
    }
    let d = stream.dim();
    let mut increments = vec![0.0; (times.len() - 1) * d];
    for (k, w) in times.windows(2).enumerate() {
        stream.sample_increment_into(w[1] - w[0], &mut increments[k * d..(k + 1) * d])?;
    }
    Ok(PathGrid {
        times: times.to_vec(),
        dim: d,
        increments,
    })
}

/// Empirical characteristic function of `n` draws of `L_t` at each frequency.
pub fn empirical_characteristic_function(
    stream: &mut IncrementStream,
    t: f64,
    xis: &[Vec<f64>],
    n: usize,
) -> Result<Vec<Complex64>> {
    let d = stream.dim();
    if xis.iter().any(|xi| xi.len() != d) {
        return Err(Error::arg("frequency dimension differs from model dimension"));
    }
    let mut acc = vec![Complex64::new(0.0, 0.0); xis.len()];
    let mut x = vec![0.0; d];
    for _ in 0..n {
        stream.sample_increment_into(t, &mut x)?;
        for (a, xi) in acc.iter_mut().zip(xis) {
            let phase: f64 = xi.iter().zip(&x).map(|(u, v)| u * v).sum();
            *a += Complex64::new(phase.cos(), phase.sin());
        }
    }
    Ok(acc.into_iter().map(|a| a / n as f64).collect())
}

/// Result of [`moment_scaling_probe`].
#[derive(Debug, Clone, PartialEq)]
pub struct MomentScalingReport {
    pub t_grid: Vec<f64>,
    pub means: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub alpha: f64,
}

impl MomentScalingReport {
    /// Fitted `M` in `E|L_t| <= M t^{1/alpha}`.
    pub fn constant(&self) -> f64 {
        self.intercept.exp()
    }

    pub fn passes(&self) -> bool {
        self.slope <= 1.0 / self.alpha + 0.1 && self.constant().is_finite()
    }
}

/// Monte Carlo `E|L_t|` on `t_grid` and its log-log slope. Each time point
/// uses its own stream (`stream_id` = index).
pub fn moment_scaling_probe(
    model: &LevyModel,
    t_grid: &[f64],
    num_samples: usize,
    seed: u64,
) -> Result<MomentScalingReport> {
    if t_grid.len() < 4 {
        return Err(Error::arg("moment probe needs at least 4 time points"));
    }
    if t_grid.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(Error::arg("moment probe times must be positive"));
    }
    let (lo, hi) = t_grid
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &t| (a.min(t), b.max(t)));
    if hi / lo < 100.0 * (1.0 - 1e-12) {
        return Err(Error::arg("moment probe times must span at least two decades"));
    }
    if num_samples < 2 {
        return Err(Error::arg("moment probe needs at least 2 samples"));
    }
    let plan = Arc::new(SamplerPlan::new(model, DEFAULT_SMALL_JUMP_CUTOFF)?);
    let mut means = Vec::with_capacity(t_grid.len());
    let mut std_errors = Vec::with_capacity(t_grid.len());
    let mut x = vec![0.0; model.dim()];
    for (i, &t) in t_grid.iter().enumerate() {
        let mut stream = IncrementStream::from_plan(plan.clone(), seed, i as u64);
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for _ in 0..num_samples {
            stream.sample_increment_into(t, &mut x)?;
            let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            sum += r;
            sum2 += r * r;
        }
        let n = num_samples as f64;
        let mean = sum / n;
        means.push(mean);
        std_errors.push(((sum2 / n - mean * mean).max(0.0) / (n - 1.0)).sqrt());
    }
    let LineFit { slope, intercept } = fit_loglog(t_grid, &means)?;
    Ok(MomentScalingReport {
        t_grid: t_grid.to_vec(),
        means,
        std_errors,
        slope,
        intercept,
        alpha: model.alpha(),
    })
}
