//! Frozen-law Euler–Maruyama, distributional Picard iteration and drift
//! mollification for `dX = b(t, X, mu_t) dt + dL_t`.

mod drift;
mod mollify;

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::levy_model::LevyModel;
use crate::measure::{theta_moment, wasserstein_theta, EmpiricalMeasure};
use crate::numerics::pairwise_sum;
use crate::sampler::{IncrementStream, SamplerPlan, DEFAULT_SMALL_JUMP_CUTOFF};

pub use drift::{
    DriftField, DriftSpec, Envelope, EnvelopeFn, FrozenDrift, KernelFn, MeasureDependence,
    MeasureFn, OuterFn, PointFn,
};
pub use mollify::{
    check_envelope, check_lipschitz, estimate_lipschitz, mollify_drift, EnvelopeCheck,
    LipschitzCheck, Mollified, LIPSCHITZ_SAFETY,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Requested step; the horizon is split into `round(T / dt)` equal steps.
    pub dt: f64,
    pub horizon: f64,
    pub particles: usize,
    pub theta: f64,
    pub seed: u64,
    pub small_jump_cutoff: f64,
}

impl SolverConfig {
    /// `dt = T/512`, `theta = 1`.
    pub fn new(horizon: f64, particles: usize, seed: u64) -> Self {
        Self {
            dt: horizon / 512.0,
            horizon,
            particles,
            theta: 1.0,
            seed,
            small_jump_cutoff: DEFAULT_SMALL_JUMP_CUTOFF,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    pub fn validate(&self, model: &LevyModel) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::arg(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(self.dt > 0.0 && self.dt <= self.horizon) {
            return Err(Error::arg(format!("time step must lie in (0, T], got {}", self.dt)));
        }
        if self.particles < 2 {
            return Err(Error::arg("at least two particles are required"));
        }
        let alpha = model.alpha();
        if !(self.theta >= 1.0 && self.theta < alpha) {
            return Err(Error::arg(format!(
                "theta must lie in [1, alpha) = [1, {alpha}), got {}",
                self.theta
            )));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        ((self.horizon / self.dt).round() as usize).max(1)
    }

    /// Step actually used, `T / steps`.
    pub fn step(&self) -> f64 {
        self.horizon / self.steps() as f64
    }

    pub fn times(&self) -> Vec<f64> {
        let n = self.steps();
        (0..=n).map(|k| self.horizon * k as f64 / n as f64).collect()
    }
}

/// Particle clouds at every time node; particle `i` is the same path at
/// every node.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub times: Vec<f64>,
    pub measures: Vec<EmpiricalMeasure>,
}

impl Ensemble {
    pub fn terminal(&self) -> &EmpiricalMeasure {
        self.measures.last().expect("ensembles are never empty")
    }

    /// Holds `mu` at every node of `times`.
    pub fn constant(times: Vec<f64>, mu: &EmpiricalMeasure) -> Self {
        let measures = vec![mu.clone(); times.len()];
        Self { times, measures }
    }
}

/// Per-path reduction driven by [`observe_paths`].
pub trait PathObserver: Sync {
    type Acc: Send;
    fn start(&self, particle: usize) -> Self::Acc;
    /// Called at node `k` with the position and the drift there. Returning
    /// `false` stops the path.
    fn visit(&self, acc: &mut Self::Acc, k: usize, t: f64, x: &[f64], drift: &[f64]) -> bool;
}

fn check_inputs(
    model: &LevyModel,
    drift: &DriftSpec,
    law_curve: Option<&[EmpiricalMeasure]>,
    init: &EmpiricalMeasure,
    cfg: &SolverConfig,
) -> Result<()> {
    cfg.validate(model)?;
    let d = model.dim();
    if drift.dim() != d || init.dim() != d {
        return Err(Error::arg(format!(
            "dimensions differ: model {d}, drift {}, initial law {}",
            drift.dim(),
            init.dim()
        )));
    }
    if init.len() != cfg.particles {
        return Err(Error::arg(format!(
            "initial law has {} particles, configuration asks for {}",
            init.len(),
            cfg.particles
        )));
    }
    if !init.is_uniform() {
        return Err(Error::arg("initial law must be a uniformly weighted particle cloud"));
    }
    if let DriftField::PowerSingular { .. } = drift.field {
        return Err(Error::Unsupported(
            "singular drifts are solved through their mollified family; call mollify_drift".into(),
        ));
    }
    match law_curve {
        Some(curve) => {
            if curve.len() != cfg.steps() + 1 {
                return Err(Error::arg(format!(
                    "law curve has {} nodes, time grid has {}",
                    curve.len(),
                    cfg.steps() + 1
                )));
            }
            if curve.iter().any(|m| m.dim() != d) {
                return Err(Error::arg("law curve dimension differs from the model"));
            }
        }
        None => {
            if drift.field.dependence() != MeasureDependence::Free {
                return Err(Error::arg("measure-dependent drift needs a law curve"));
            }
        }
    }
    Ok(())
}

/// Runs every particle through the frozen-law scheme, reducing each path
/// with `observer`. Particle `i` draws its noise from stream `i` of
/// `cfg.seed`, so results do not depend on the worker count.
pub fn observe_paths<O: PathObserver>(
    model: &LevyModel,
    drift: &DriftSpec,
    law_curve: Option<&[EmpiricalMeasure]>,
    init: &EmpiricalMeasure,
    cfg: &SolverConfig,
    observer: &O,
) -> Result<Vec<O::Acc>> {
    check_inputs(model, drift, law_curve, init, cfg)?;
    let plan = Arc::new(SamplerPlan::new(model, cfg.small_jump_cutoff)?);
    let times = cfg.times();
    let dt = cfg.step();
    let frozen: Vec<FrozenDrift<'_>> = times
        .iter()
        .enumerate()
        .map(|(k, &t)| drift.field.freeze(t, law_curve.map_or(init, |c| &c[k])))
        .collect();
    let d = model.dim();
    (0..cfg.particles)
        .into_par_iter()
        .map(|i| {
            let mut stream = IncrementStream::from_plan(plan.clone(), cfg.seed, i as u64);
            let mut acc = observer.start(i);
            let mut x = init.particle(i).to_vec();
            let mut b = vec![0.0; d];
            let mut dl = vec![0.0; d];
            for (k, &t) in times.iter().enumerate() {
                frozen[k].eval(&x, &mut b);
                if b.iter().any(|v| !v.is_finite()) {
                    return Err(Error::numerical(
                        format!("drift is not finite at t = {t}, x = {x:?}"),
                        f64::NAN,
                    ));
                }
                if !observer.visit(&mut acc, k, t, &x, &b) || k + 1 == times.len() {
                    break;
                }
                stream.sample_increment_into(dt, &mut dl)?;
                for a in 0..d {
                    x[a] += b[a] * dt + dl[a];
                }
            }
            Ok(acc)
        })
        .collect()
}

/// Euler–Maruyama for the SDE with the law argument frozen to `law_curve`
/// (one measure per time node; `None` for measure-free drifts).
///
/// All particles advance together one step at a time; particle `i` uses the
/// same noise stream as in [`observe_paths`].
pub fn solve_frozen(
    model: &LevyModel,
    drift: &DriftSpec,
    law_curve: Option<&[EmpiricalMeasure]>,
    init: &EmpiricalMeasure,
    cfg: &SolverConfig,
) -> Result<Ensemble> {
    check_inputs(model, drift, law_curve, init, cfg)?;
    let plan = Arc::new(SamplerPlan::new(model, cfg.small_jump_cutoff)?);
    let d = model.dim();
    let times = cfg.times();
    let dt = cfg.step();
    let weights = init.shared_weights();
    let mut streams: Vec<IncrementStream> = (0..cfg.particles)
        .map(|i| IncrementStream::from_plan(plan.clone(), cfg.seed, i as u64))
        .collect();
    let mut state = init.particles().to_vec();
    let mut measures = Vec::with_capacity(times.len());
    measures.push(init.clone());
    for (k, &t) in times.iter().enumerate().take(times.len() - 1) {
        let frozen = drift.field.freeze(t, law_curve.map_or(init, |c| &c[k]));
        let failure = state
            .par_chunks_mut(d)
            .zip(streams.par_iter_mut())
            .map_init(
                || (vec![0.0; d], vec![0.0; d]),
                |(b, dl), (x, stream)| -> Result<()> {
                    frozen.eval(x, b);
                    if b.iter().any(|v| !v.is_finite()) {
                        return Err(Error::numerical(
                            format!("drift is not finite at t = {t}, x = {x:?}"),
                            f64::NAN,
                        ));
                    }
                    stream.sample_increment_into(dt, dl)?;
                    for a in 0..d {
                        x[a] += b[a] * dt + dl[a];
                    }
                    Ok(())
                },
            )
            .find_map_first(|r| r.err());
        if let Some(e) = failure {
            return Err(e);
        }
        measures.push(EmpiricalMeasure::with_shared_weights(d, state.clone(), weights.clone())?);
    }
    Ok(Ensemble { times, measures })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PicardStatus {
    /// `mu^(iteration)` is a fixed point: the next gap fell below the tolerance.
    Converged { iteration: usize },
    MaxIterations,
    /// Gap ratios stayed at or above one for three consecutive iterations.
    Diverged { iteration: usize },
}

#[derive(Debug, Clone)]
pub struct PicardState {
    pub status: PicardStatus,
    /// Number of frozen-law solves performed.
    pub iteration: usize,
    /// Last iterate.
    pub ensemble: Ensemble,
    /// `gaps[n - 1] = sup_t W_theta(mu_t^(n), mu_t^(n-1))`.
    pub gaps: Vec<f64>,
    /// Running sup over time of the per-node distance, per iteration.
    pub gap_curves: Vec<Vec<f64>>,
    /// `sup_t E|X_t^(n) - X_t^(n-1)|^theta` over the common noise, per iteration.
    pub pathwise_gaps: Vec<f64>,
    /// `sup_t theta_moment(mu_t^(n))` per iteration.
    pub theta_moments: Vec<f64>,
    pub contraction_estimate: Option<f64>,
    pub k1: Option<f64>,
    /// `min(T, K1^{-2/theta})`.
    pub window: Option<f64>,
    pub theta: f64,
    /// Some distance fell back to the sliced approximation.
    pub approximate: bool,
}

impl PicardState {
    pub fn final_gap(&self) -> f64 {
        *self.gaps.last().expect("at least one iteration runs")
    }

    pub fn converged(&self) -> bool {
        matches!(self.status, PicardStatus::Converged { .. })
    }
}

fn sup_curve(
    a: &[EmpiricalMeasure],
    b: &[EmpiricalMeasure],
    theta: f64,
) -> Result<(Vec<f64>, bool)> {
    let per_node: Vec<(f64, bool)> = a
        .par_iter()
        .zip(b)
        .map(|(x, y)| wasserstein_theta(x, y, theta).map(|w| (w.value, w.is_approximate())))
        .collect::<Result<_>>()?;
    let mut running = 0.0f64;
    let curve = per_node
        .iter()
        .map(|(v, _)| {
            running = running.max(*v);
            running
        })
        .collect();
    Ok((curve, per_node.iter().any(|(_, a)| *a)))
}

/// `E|X^(n)_t - X^(n-1)_t|^theta` per node, pairing particles by index.
fn pathwise_curve(a: &[EmpiricalMeasure], b: &[EmpiricalMeasure], theta: f64) -> Vec<f64> {
    a.par_iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x.dim();
            let terms: Vec<f64> = (0..x.len())
                .map(|i| {
                    let r = x.particle(i)
                        .iter()
                        .zip(y.particle(i))
                        .map(|(p, q)| (p - q) * (p - q))
                        .sum::<f64>()
                        .sqrt();
                    debug_assert_eq!(d, x.particle(i).len());
                    x.weights()[i] * r.powf(theta)
                })
                .collect();
            pairwise_sum(&terms)
        })
        .collect()
}

fn running_sup(v: &[f64]) -> Vec<f64> {
    let mut m = 0.0f64;
    v.iter()
        .map(|x| {
            m = m.max(*x);
            m
        })
        .collect()
}

/// Geometric mean of `gaps[n] / gaps[n-1]` over the iterations after the first.
fn contraction_estimate(gaps: &[f64]) -> Option<f64> {
    let ratios: Vec<f64> = gaps
        .windows(2)
        .filter(|w| w[0] > 0.0)
        .map(|w| w[1] / w[0])
        .collect();
    if ratios.is_empty() {
        return None;
    }
    if ratios.iter().any(|r| *r == 0.0) {
        return Some(0.0);
    }
    let mean_log = ratios.iter().map(|r| r.ln()).sum::<f64>() / ratios.len() as f64;
    Some(mean_log.exp())
}

/// Fits `S_n(t) <= K1 t^{theta/2} S_{n-1}(t)` by least squares through the
/// origin, pooling every truncated horizon and iteration.
fn fit_k1(curves: &[Vec<f64>], times: &[f64], theta: f64) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for pair in curves.windows(2) {
        let (prev, next) = (&pair[0], &pair[1]);
        for (k, &t) in times.iter().enumerate().skip(1) {
            if prev[k] > 0.0 {
                let u = t.powf(0.5 * theta);
                num += u * next[k] / prev[k];
                den += u * u;
            }
        }
    }
    (den > 0.0).then(|| num / den)
}

/// Iterates `mu^(n) = Law(X^(n))` with `X^(n)` solving the SDE frozen at
/// `mu^(n-1)`, from `mu^(0)` = law of `init` held constant in time. Every
/// iteration reuses the same noise.
pub fn picard_iterate(
    model: &LevyModel,
    drift: &DriftSpec,
    init: &EmpiricalMeasure,
    cfg: &SolverConfig,
    tol: f64,
    max_iter: usize,
) -> Result<PicardState> {
    if drift.lipschitz.is_none() {
        return Err(Error::arg(
            "Picard iteration needs a Lipschitz drift; mollify singular drifts first",
        ));
    }
    if !(tol > 0.0) || max_iter == 0 {
        return Err(Error::arg("tolerance must be positive and max_iter at least one"));
    }
    cfg.validate(model)?;
    let theta = cfg.theta;
    let times = cfg.times();
    let mut prev = Ensemble::constant(times.clone(), init);
    let mut gaps = Vec::new();
    let mut gap_curves = Vec::new();
    let mut path_curves: Vec<Vec<f64>> = Vec::new();
    let mut pathwise_gaps = Vec::new();
    let mut theta_moments = Vec::new();
    let mut approximate = false;
    let mut status = PicardStatus::MaxIterations;
    let mut rising = 0;
    for n in 1..=max_iter {
        let next = solve_frozen(model, drift, Some(&prev.measures), init, cfg)?;
        let (curve, approx) = sup_curve(&next.measures, &prev.measures, theta)?;
        approximate |= approx;
        let gap = *curve.last().expect("non-empty grid");
        let pc = running_sup(&pathwise_curve(&next.measures, &prev.measures, theta));
        pathwise_gaps.push(*pc.last().expect("non-empty grid"));
        path_curves.push(pc);
        theta_moments.push(
            next.measures
                .iter()
                .map(|m| theta_moment(m, theta))
                .fold(0.0, f64::max),
        );
        gap_curves.push(curve);
        if let Some(last) = gaps.last().copied() {
            if n > 2 && gap >= last {
                rising += 1;
            } else {
                rising = 0;
            }
        }
        gaps.push(gap);
        prev = next;
        if gap < tol {
            status = PicardStatus::Converged {
                iteration: (n - 1).max(1),
            };
            break;
        }
        if rising >= 3 {
            status = PicardStatus::Diverged { iteration: n };
            break;
        }
    }
    // the first iterate's gap is against the frozen initial law; skip it
    let contraction = contraction_estimate(&gaps[1.min(gaps.len() - 1)..])
        .or_else(|| contraction_estimate(&gaps));
    let k1 = fit_k1(&path_curves, &times, theta);
    let window = k1.map(|k| {
        if k > 0.0 {
            cfg.horizon.min(k.powf(-2.0 / theta))
        } else {
            cfg.horizon
        }
    });
    Ok(PicardState {
        status,
        iteration: gaps.len(),
        ensemble: prev,
        gaps,
        gap_curves,
        pathwise_gaps,
        theta_moments,
        contraction_estimate: contraction,
        k1,
        window,
        theta,
        approximate,
    })
}

/// `sup_t W_theta` between the state's law curve and a re-solve frozen at it.
pub fn fixed_point_residual(
    model: &LevyModel,
    drift: &DriftSpec,
    state: &PicardState,
    init: &EmpiricalMeasure,
    cfg: &SolverConfig,
) -> Result<f64> {
    let again = solve_frozen(model, drift, Some(&state.ensemble.measures), init, cfg)?;
    let (curve, _) = sup_curve(&again.measures, &state.ensemble.measures, state.theta)?;
    Ok(*curve.last().expect("non-empty grid"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrabilityReport {
    pub delta: f64,
    /// `E int_0^T |b^n(s, X_s^n, mu_s^n)|^delta ds` per `n`.
    pub values: Vec<f64>,
    pub value: f64,
    /// Doubling across each of the last three values.
    pub growing: bool,
}

/// Trapezoid-in-time Monte Carlo estimate per `(drift, ensemble)` pair; the
/// law argument is the ensemble's own law.
pub fn drift_integrability_report(
    drifts: &[DriftSpec],
    ensembles: &[Ensemble],
    delta: f64,
) -> Result<IntegrabilityReport> {
    if !(delta > 1.0) {
        return Err(Error::arg(format!("delta must exceed 1, got {delta}")));
    }
    if drifts.len() != ensembles.len() || drifts.is_empty() {
        return Err(Error::arg("need one ensemble per drift"));
    }
    let values = drifts
        .iter()
        .zip(ensembles)
        .map(|(drift, ens)| {
            let per_node: Vec<f64> = ens
                .times
                .par_iter()
                .zip(&ens.measures)
                .map(|(&t, mu)| {
                    let frozen = drift.field.freeze(t, mu);
                    let mut b = vec![0.0; mu.dim()];
                    let terms: Vec<f64> = (0..mu.len())
                        .map(|i| {
                            frozen.eval(mu.particle(i), &mut b);
                            mu.weights()[i] * b.iter().map(|v| v * v).sum::<f64>().sqrt().powf(delta)
                        })
                        .collect();
                    pairwise_sum(&terms)
                })
                .collect();
            let mut total = 0.0;
            for k in 1..ens.times.len() {
                total += 0.5 * (per_node[k] + per_node[k - 1]) * (ens.times[k] - ens.times[k - 1]);
            }
            total
        })
        .collect::<Vec<f64>>();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("drift integral is not finite", f64::NAN));
    }
    let m = values.len();
    let growing = m >= 3 && values[m - 1] >= 2.0 * values[m - 2] && values[m - 2] >= 2.0 * values[m - 3];
    Ok(IntegrabilityReport {
        delta,
        value: values.iter().cloned().fold(0.0, f64::max),
        values,
        growing,
    })
}
