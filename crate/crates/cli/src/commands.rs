//! The five subcommands.

use std::path::Path;

use anyhow::{anyhow, Result};
use serde::Serialize;

use levymv::kernel::{
    bump_panel, critical_profile, gradient_bound_probe, smoothing_probe, strong_continuity_probe, GridSpec,
};
use levymv::krylov::{krylov_sweep, path_integrals, ratios_from, shrinking_family, standard_panel};
use levymv::levy_model::{admissible_pq, krylov_pq_check, LevyModel};
use levymv::measure::EmpiricalMeasure;
use levymv::numerics::ks_two_sample;
use levymv::sampler::IncrementStream;
use levymv::solver::{
    fixed_point_residual, picard_iterate, solve_frozen, DriftField, DriftSpec, MeasureDependence, PicardStatus,
    SolverConfig,
};

use crate::config::{ExperimentConfig, InitBlock, ProbeCheck};
use crate::output::{num, Csv, OutputDir};

/// A library error tagged with the module that raised it.
#[derive(Debug)]
pub struct ModuleError {
    pub module: &'static str,
    pub source: levymv::Error,
}

impl std::fmt::Display for ModuleError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.module, self.source)
    }
}

// the wrapped error is already part of the message
impl std::error::Error for ModuleError {}

/// A probe ran to completion but its check failed (exit status 4).
#[derive(Debug)]
pub struct ProbeFailure(pub String);

impl std::fmt::Display for ProbeFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "probe failure: {}", self.0)
    }
}

impl std::error::Error for ProbeFailure {}

trait InModule<T> {
    fn in_module(self, module: &'static str) -> Result<T>;
}

impl<T> InModule<T> for levymv::Result<T> {
    fn in_module(self, module: &'static str) -> Result<T> {
        self.map_err(|source| anyhow!(ModuleError { module, source }))
    }
}

const INIT_SALT: u64 = 0x696e_6974;
const KS_SALT: u64 = 0x6b73_6b73;
const KS_LEVEL: f64 = 0.01;

struct Setup {
    model: LevyModel,
    drift: DriftSpec,
    cfg: SolverConfig,
    init: EmpiricalMeasure,
}

fn setup(c: &ExperimentConfig) -> Result<Setup> {
    let model = c.model.build().in_module("levy_model")?;
    let drift = c.drift.build(model.dim(), c.solver.horizon).in_module("solver")?;
    let cfg = c.solver.build(c.seed);
    cfg.validate(&model).in_module("solver")?;
    let init = initial_law(&c.init, model.dim(), cfg.particles, c.seed).in_module("sampler")?;
    Ok(Setup {
        model,
        drift,
        cfg,
        init,
    })
}

/// `N(0, I)` draws come from unit-time Brownian increments.
fn initial_law(init: &InitBlock, dim: usize, n: usize, seed: u64) -> levymv::Result<EmpiricalMeasure> {
    match init {
        InitBlock::Point { at } => {
            let x = at.clone().unwrap_or_else(|| vec![0.0; dim]);
            if x.len() != dim {
                return Err(levymv::Error::Argument(format!("init point must have {dim} coordinates")));
            }
            EmpiricalMeasure::uniform(dim, x.repeat(n))
        }
        InitBlock::Normal { mean, sd } => {
            if !(*sd >= 0.0 && mean.is_finite()) {
                return Err(levymv::Error::Argument("init needs a finite mean and sd >= 0".into()));
            }
            let mut stream = IncrementStream::new(&LevyModel::brownian(dim), seed ^ INIT_SALT, 0)?;
            let mut xs = vec![0.0; n * dim];
            for chunk in xs.chunks_mut(dim) {
                stream.sample_increment_into(1.0, chunk)?;
                for v in chunk.iter_mut() {
                    *v = mean + sd * *v;
                }
            }
            EmpiricalMeasure::uniform(dim, xs)
        }
    }
}

/// Law-dependent drifts are frozen at the initial law.
fn frozen_curve(s: &Setup) -> Option<Vec<EmpiricalMeasure>> {
    match s.drift.field.dependence() {
        MeasureDependence::Free => None,
        _ => Some(vec![s.init.clone(); s.cfg.steps() + 1]),
    }
}

pub fn simulate(c: &ExperimentConfig, out: &mut OutputDir) -> Result<()> {
    let s = setup(c)?;
    let curve = frozen_curve(&s);
    let ens = solve_frozen(&s.model, &s.drift, curve.as_deref(), &s.init, &s.cfg).in_module("solver")?;
    let steps = s.cfg.steps();
    let every = c.solver.record_every.unwrap_or((steps / 8).max(1));
    let mut nodes: Vec<usize> = (0..=steps).step_by(every).collect();
    if nodes.last() != Some(&steps) {
        nodes.push(steps);
    }
    let d = s.model.dim();
    let mut cols = vec!["t".to_owned(), "particle".to_owned()];
    cols.extend((0..d).map(|a| format!("x{a}")));
    let mut csv = Csv::new(&cols.iter().map(String::as_str).collect::<Vec<_>>());
    for &k in &nodes {
        let mu = &ens.measures[k];
        let t = num(ens.times[k]);
        for i in 0..mu.len() {
            csv.row(
                [t.clone(), i.to_string()]
                    .into_iter()
                    .chain(mu.particle(i).iter().map(|v| num(*v))),
            );
        }
    }
    out.write("ensemble.csv", &csv.finish())?;

    if !matches!(s.drift.field, DriftField::Zero { .. }) {
        return Ok(());
    }
    // drift-free: the law at t is init + L_t, sampled directly
    let checked: Vec<usize> = nodes.iter().copied().filter(|&k| k > 0).collect();
    let level = KS_LEVEL / checked.len().max(1) as f64;
    let mut ks = Csv::new(&["t", "statistic", "p_value", "level", "pass"]);
    let mut failed = Vec::new();
    for &k in &checked {
        let t = ens.times[k];
        let mut stream =
            IncrementStream::with_cutoff(&s.model, s.cfg.seed ^ KS_SALT, k as u64, s.cfg.small_jump_cutoff)
                .in_module("sampler")?;
        let mut x = vec![0.0; d];
        let mut direct = Vec::with_capacity(s.init.len());
        for i in 0..s.init.len() {
            stream.sample_increment_into(t, &mut x).in_module("sampler")?;
            direct.push(s.init.particle(i)[0] + x[0]);
        }
        let outcome = ks_two_sample(&ens.measures[k].axis(0), &direct);
        let pass = outcome.passes(level);
        if !pass {
            failed.push(t);
        }
        ks.row([
            num(t),
            num(outcome.statistic),
            num(outcome.p_value),
            num(level),
            if pass { "PASS" } else { "FAIL" }.to_owned(),
        ]);
    }
    out.write("ks.csv", &ks.finish())?;
    if !failed.is_empty() {
        return Err(anyhow!(ProbeFailure(format!(
            "drift-free ensemble fails the KS check at t = {failed:?}"
        ))));
    }
    Ok(())
}

#[derive(Serialize)]
struct PicardSummary {
    status: String,
    status_iteration: Option<usize>,
    solves: usize,
    final_gap: f64,
    tol: f64,
    contraction_estimate: Option<f64>,
    k1: Option<f64>,
    window: Option<f64>,
    theta: f64,
    approximate: bool,
    fixed_point_residual: f64,
    initial_mean: Vec<f64>,
    terminal_mean: Vec<f64>,
}

pub fn picard(c: &ExperimentConfig, out: &mut OutputDir) -> Result<()> {
    let s = setup(c)?;
    let state = picard_iterate(&s.model, &s.drift, &s.init, &s.cfg, c.picard.tol, c.picard.max_iter)
        .in_module("solver")?;
    let residual = fixed_point_residual(&s.model, &s.drift, &state, &s.init, &s.cfg).in_module("solver")?;
    let (status, at) = match state.status {
        PicardStatus::Converged { iteration } => ("converged", Some(iteration)),
        PicardStatus::MaxIterations => ("max_iterations", None),
        PicardStatus::Diverged { iteration } => ("diverged", Some(iteration)),
    };
    let summary = PicardSummary {
        status: status.into(),
        status_iteration: at,
        solves: state.iteration,
        final_gap: state.final_gap(),
        tol: c.picard.tol,
        contraction_estimate: state.contraction_estimate,
        k1: state.k1,
        window: state.window,
        theta: state.theta,
        approximate: state.approximate,
        fixed_point_residual: residual,
        initial_mean: s.init.mean(),
        terminal_mean: state.ensemble.terminal().mean(),
    };
    out.write("picard_summary.toml", &toml::to_string(&summary)?)?;
    let mut gaps = Csv::new(&["iteration", "gap", "pathwise_gap", "theta_moment"]);
    for (i, g) in state.gaps.iter().enumerate() {
        let opt = |v: Option<&f64>| v.map_or_else(|| "nan".to_owned(), |x| num(*x));
        gaps.row([
            (i + 1).to_string(),
            num(*g),
            opt(state.pathwise_gaps.get(i)),
            opt(state.theta_moments.get(i)),
        ]);
    }
    out.write("picard_gaps.csv", &gaps.finish())?;
    if !state.converged() {
        return Err(anyhow!(ProbeFailure(format!(
            "Picard iteration {status} after {} solves, final gap {:e}",
            state.iteration,
            state.final_gap()
        ))));
    }
    Ok(())
}

pub fn kernel_probe(c: &ExperimentConfig, out: &mut OutputDir) -> Result<()> {
    let model = c.model.build().in_module("levy_model")?;
    let pb = &c.probe;
    let dim = model.dim();
    let mut table = Csv::new(&["check", "p", "parameter", "slope", "reference", "deviation", "pass"]);
    let mut series = Csv::new(&["check", "p", "parameter", "t", "value", "used"]);
    let mut failed = Vec::new();
    let mut record = |check: &str, p: f64, param: f64, t: &[f64], values: &[f64], used: &[bool], slope: f64, reference: f64, pass: bool| {
        table.row([
            check.to_owned(),
            num(p),
            num(param),
            num(slope),
            num(reference),
            num(slope - reference),
            if pass { "PASS" } else { "FAIL" }.to_owned(),
        ]);
        for ((t, v), u) in t.iter().zip(values).zip(used) {
            series.row([check.to_owned(), num(p), num(param), num(*t), num(*v), u.to_string()]);
        }
        if !pass {
            failed.push(format!("{check} p={p} parameter={param}"));
        }
    };
    if pb.checks.contains(&ProbeCheck::Gradient) {
        let grid = GridSpec::cube(dim, pb.gradient_extent, pb.gradient_resolution).in_module("kernel")?;
        let panel = bump_panel(&grid, &pb.panel_widths).in_module("kernel")?;
        for &p in &pb.p {
            for &k in &pb.orders {
                let r = gradient_bound_probe(&model, p, &pb.gradient_t, &panel, k).in_module("kernel")?;
                record("gradient", p, k as f64, &r.t_grid, &r.ratios, &r.used, r.slope, r.reference, r.passes);
            }
        }
    }
    let wants_profile = pb.checks.iter().any(|c| *c != ProbeCheck::Gradient);
    if wants_profile {
        let grid = GridSpec::cube(dim, pb.profile_extent, pb.profile_resolution).in_module("kernel")?;
        if pb.checks.contains(&ProbeCheck::Smoothing) {
            let f = critical_profile(&grid, pb.beta).in_module("kernel")?;
            for &p in &pb.profile_p {
                for &g in &pb.gamma {
                    let r = smoothing_probe(&model, p, g, pb.beta, &pb.smoothing_t, &f).in_module("kernel")?;
                    record("smoothing", p, g, &r.t_grid, &r.values, &r.used, r.slope, r.reference, r.passes);
                }
            }
        }
        if pb.checks.contains(&ProbeCheck::Continuity) {
            for &theta in &pb.theta {
                let f = critical_profile(&grid, theta).in_module("kernel")?;
                for &p in &pb.profile_p {
                    let r = strong_continuity_probe(&model, p, theta, &pb.continuity_t, &f).in_module("kernel")?;
                    record("continuity", p, theta, &r.t_grid, &r.values, &r.used, r.slope, r.reference, r.passes);
                }
            }
        }
    }
    out.write("kernel_probe.csv", &table.finish())?;
    out.write("kernel_probe_series.csv", &series.finish())?;
    if !failed.is_empty() {
        return Err(anyhow!(ProbeFailure(format!("slope outside tolerance: {}", failed.join("; ")))));
    }
    Ok(())
}

pub fn krylov_check(c: &ExperimentConfig, out: &mut OutputDir) -> Result<()> {
    let s = setup(c)?;
    let kb = &c.krylov;
    let grid = GridSpec::cube(s.model.dim(), kb.extent, kb.resolution).in_module("kernel")?;
    let panel = standard_panel(&grid, s.cfg.horizon).in_module("krylov_harness")?;
    let curve = frozen_curve(&s);
    let sides = path_integrals(&s.model, &s.drift, &panel, curve.as_deref(), &s.init, &s.cfg, kb.stop_radius)
        .in_module("krylov_harness")?;
    let mut csv = Csv::new(&[
        "f_id", "p", "q", "gate", "lhs", "drift_mass", "f_norm", "ratio", "panel_max", "panel_median", "bounded",
    ]);
    let mut failed = Vec::new();
    for &(p, q) in &kb.cells {
        let r = ratios_from(&s.model, &sides, &panel, p, q).in_module("krylov_harness")?;
        let bounded = r.bounded(kb.bound_factor);
        if r.gate && !bounded {
            failed.push(format!("({p}, {q}): max {:e} vs median {:e}", r.panel_max, r.panel_median));
        }
        for e in &r.entries {
            csv.row([
                e.f_id.to_string(),
                num(p),
                num(q),
                if r.gate { "admissible" } else { "inadmissible" }.to_owned(),
                num(e.lhs),
                num(e.drift_mass),
                num(e.f_norm),
                num(e.ratio),
                num(r.panel_max),
                num(r.panel_median),
                bounded.to_string(),
            ]);
        }
    }
    out.write("krylov.csv", &csv.finish())?;
    if !kb.family_widths.is_empty() {
        let center = vec![0.0; s.model.dim()];
        let family = shrinking_family(
            &grid,
            &center,
            &kb.family_widths,
            s.model.alpha(),
            s.cfg.horizon,
            kb.family_slices,
        )
        .in_module("krylov_harness")?;
        let rows = krylov_sweep(
            &s.model,
            &s.drift,
            &panel,
            &family,
            &kb.family_widths,
            &kb.cells,
            curve.as_deref(),
            &s.init,
            &s.cfg,
        )
        .in_module("krylov_harness")?;
        let mut sweep = Csv::new(&["p", "q", "gate", "panel_max", "panel_median", "trend"]);
        for r in rows {
            sweep.row([
                num(r.p),
                num(r.q),
                if r.gate { "admissible" } else { "inadmissible" }.to_owned(),
                num(r.panel_max),
                num(r.panel_median),
                num(r.trend),
            ]);
        }
        out.write("krylov_sweep.csv", &sweep.finish())?;
    }
    if !failed.is_empty() {
        return Err(anyhow!(ProbeFailure(format!(
            "Krylov ratio unbounded over the panel: {}",
            failed.join("; ")
        ))));
    }
    Ok(())
}

/// Summary text of one gate row, e.g. `admissible, γ∈(1.25,1.5)`.
pub fn admissible_summary(alpha: f64, d: usize, p: f64, q: f64) -> String {
    match admissible_pq(alpha, d, p, q).gamma_window {
        Some((lo, hi)) => format!("admissible, γ∈({lo},{hi})"),
        None => "inadmissible".to_owned(),
    }
}

pub fn admissible(c: &ExperimentConfig, out: &mut OutputDir) -> Result<()> {
    let a = &c.admissible;
    let mut csv = Csv::new(&["alpha", "d", "p", "q", "admissible", "gamma_lo", "gamma_hi", "krylov_gate", "summary"]);
    for &alpha in &a.alpha {
        for &d in &a.d {
            for &p in &a.p {
                for &q in &a.q {
                    let adm = admissible_pq(alpha, d, p, q);
                    let (lo, hi) = adm.gamma_window.unwrap_or((f64::NAN, f64::NAN));
                    csv.row([
                        num(alpha),
                        d.to_string(),
                        num(p),
                        num(q),
                        adm.admissible.to_string(),
                        num(lo),
                        num(hi),
                        krylov_pq_check(alpha, d, p, q).to_string(),
                        admissible_summary(alpha, d, p, q),
                    ]);
                }
            }
        }
    }
    out.write("admissible.csv", &csv.finish())
}

pub fn output_dir(c: &ExperimentConfig) -> &Path {
    Path::new(&c.output.dir)
}
