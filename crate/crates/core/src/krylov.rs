//! Monte Carlo check of the Krylov-type estimate
//! `E int_0^{T ^ tau} f(s, X_s) ds <= C (1 + E int_0^{T ^ tau} |xi_s| ds) ||f||_{L^q L^p}`
//! for `X = X_0 + int xi ds + L`, with `xi_s = b(s, X_s, mu_s)` from the solver.

use crate::error::{Error, Result};
use crate::kernel::{gaussian_bump, GridFunction, GridSpec, SpaceTimeFunction};
use crate::levy_model::{krylov_pq_check, krylov_pq_violation, LevyModel};
use crate::measure::EmpiricalMeasure;
use crate::numerics::{fit_loglog, median, pairwise_sum};
use crate::solver::{observe_paths, DriftSpec, PathObserver, SolverConfig};

/// One test function's side of the estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct KrylovEntry {
    pub f_id: usize,
    /// `E int_0^{T ^ tau} f(s, X_s) ds`.
    pub lhs: f64,
    /// `E int_0^{T ^ tau} |xi_s| ds`.
    pub drift_mass: f64,
    pub f_norm: f64,
    /// `lhs / ((1 + drift_mass) f_norm)`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrylovReport {
    pub p: f64,
    pub q: f64,
    pub gate: bool,
    pub entries: Vec<KrylovEntry>,
    pub panel_max: f64,
    pub panel_median: f64,
}

impl KrylovReport {
    /// Panel max at most `factor` times the panel median.
    pub fn bounded(&self, factor: f64) -> bool {
        self.panel_max <= factor * self.panel_median
    }
}

/// Path-side integrals for every panel function, independent of `(p, q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathIntegrals {
    pub lhs: Vec<f64>,
    pub drift_mass: f64,
    pub paths: usize,
}

struct Occupation<'a> {
    panel: &'a [SpaceTimeFunction],
    dt: f64,
    radius: Option<f64>,
}

struct OccupationAcc {
    sums: Vec<f64>,
    prev: Vec<f64>,
    drift_sum: f64,
    prev_drift: f64,
}

impl PathObserver for Occupation<'_> {
    type Acc = OccupationAcc;

    fn start(&self, _: usize) -> OccupationAcc {
        OccupationAcc {
            sums: vec![0.0; self.panel.len()],
            prev: vec![0.0; self.panel.len()],
            drift_sum: 0.0,
            prev_drift: 0.0,
        }
    }

    fn visit(&self, acc: &mut OccupationAcc, k: usize, t: f64, x: &[f64], drift: &[f64]) -> bool {
        let b = drift.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (j, f) in self.panel.iter().enumerate() {
            let v = f.eval(t, x);
            if k > 0 {
                acc.sums[j] += 0.5 * self.dt * (acc.prev[j] + v);
            }
            acc.prev[j] = v;
        }
        if k > 0 {
            acc.drift_sum += 0.5 * self.dt * (acc.prev_drift + b);
        }
        acc.prev_drift = b;
        // first grid exit from the ball ends the path
        match self.radius {
            Some(r) => x.iter().map(|v| v * v).sum::<f64>().sqrt() < r,
            None => true,
        }
    }
}

fn check_panel(panel: &[SpaceTimeFunction], dim: usize, horizon: f64) -> Result<()> {
    if panel.is_empty() {
        return Err(Error::arg("test-function panel is empty"));
    }
    for (j, f) in panel.iter().enumerate() {
        if f.dim() != dim {
            return Err(Error::arg(format!("panel function {j} has the wrong dimension")));
        }
        if !f.is_nonnegative() {
            return Err(Error::arg(format!("panel function {j} takes negative values")));
        }
        let (s, e) = f.window();
        if s != 0.0 || (e - horizon).abs() > 1e-12 * horizon {
            return Err(Error::arg(format!(
                "panel function {j} lives on [{s}, {e}], not on the horizon [0, {horizon}]"
            )));
        }
    }
    Ok(())
}

/// Simulates the paths once and integrates every panel function along them
/// with the trapezoidal rule, stopping at the first grid exit from the ball
/// of radius `stop_radius` if given.
#[allow(clippy::too_many_arguments)]
pub fn path_integrals(
    model: &LevyModel,
    drift: &DriftSpec,
    panel: &[SpaceTimeFunction],
    law_curve: Option<&[EmpiricalMeasure]>,
    init: &EmpiricalMeasure,
    cfg: &SolverConfig,
    stop_radius: Option<f64>,
) -> Result<PathIntegrals> {
    check_panel(panel, model.dim(), cfg.horizon)?;
    if let Some(r) = stop_radius {
        if !(r > 0.0) {
            return Err(Error::arg("stopping radius must be positive"));
        }
    }
    let observer = Occupation {
        panel,
        dt: cfg.step(),
        radius: stop_radius,
    };
    let accs = observe_paths(model, drift, law_curve, init, cfg, &observer)?;
    let n = accs.len() as f64;
    let lhs = (0..panel.len())
        .map(|j| {
            let v: Vec<f64> = accs.iter().map(|a| a.sums[j]).collect();
            pairwise_sum(&v) / n
        })
        .collect();
    let dm: Vec<f64> = accs.iter().map(|a| a.drift_sum).collect();
    Ok(PathIntegrals {
        lhs,
        drift_mass: pairwise_sum(&dm) / n,
        paths: accs.len(),
    })
}

fn assemble(sides: &PathIntegrals, panel: &[SpaceTimeFunction], p: f64, q: f64, gate: bool) -> Result<KrylovReport> {
    let entries = panel
        .iter()
        .enumerate()
        .map(|(j, f)| {
            let f_norm = f.norm(p, q)?;
            if !(f_norm > 0.0) {
                return Err(Error::arg(format!("panel function {j} has zero norm")));
            }
            let lhs = sides.lhs[j];
            Ok(KrylovEntry {
                f_id: j,
                lhs,
                drift_mass: sides.drift_mass,
                f_norm,
                ratio: lhs / ((1.0 + sides.drift_mass) * f_norm),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ratios: Vec<f64> = entries.iter().map(|e| e.ratio).collect();
    Ok(KrylovReport {
        p,
        q,
        gate,
        panel_max: ratios.iter().cloned().fold(0.0, f64::max),
        panel_median: median(&ratios),
        entries,
    })
}

/// Both sides of the estimate for every panel function at `(p, q)`.
/// Inadmissible exponents are rejected with a gate error.
#[allow(clippy::too_many_arguments)]
pub fn krylov_ratio(
    model: &LevyModel,
    drift: &DriftSpec,
    panel: &[SpaceTimeFunction],
    p: f64,
    q: f64,
    law_curve: Option<&[EmpiricalMeasure]>,
    init: &EmpiricalMeasure,
    cfg: &SolverConfig,
    stop_radius: Option<f64>,
) -> Result<KrylovReport> {
    if let Some(v) = krylov_pq_violation(model.alpha(), model.dim(), p, q) {
        return Err(Error::Gate(v));
    }
    let sides = path_integrals(model, drift, panel, law_curve, init, cfg, stop_radius)?;
    assemble(&sides, panel, p, q, true)
}

/// Ratios from precomputed path integrals; the gate is reported, not enforced.
pub fn ratios_from(
    model: &LevyModel,
    sides: &PathIntegrals,
    panel: &[SpaceTimeFunction],
    p: f64,
    q: f64,
) -> Result<KrylovReport> {
    let gate = krylov_pq_check(model.alpha(), model.dim(), p, q);
    assemble(sides, panel, p, q, gate)
}

/// One cell of [`krylov_sweep`].
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub p: f64,
    pub q: f64,
    pub gate: bool,
    pub panel_max: f64,
    pub panel_median: f64,
    /// Log-log slope of the ratio against the bump width over the shrinking
    /// family; negative values mean the ratio grows as bumps concentrate.
    pub trend: f64,
}

/// Bumps at `center` of widths `widths`, each switched on for the
/// parabolic time `[0, w^alpha]` (rounded up to whole slices).
pub fn shrinking_family(
    grid: &GridSpec,
    center: &[f64],
    widths: &[f64],
    alpha: f64,
    horizon: f64,
    slices: usize,
) -> Result<Vec<SpaceTimeFunction>> {
    widths
        .iter()
        .map(|&w| {
            let bump = gaussian_bump(grid, center, w)?;
            let active = ((w.powf(alpha) / horizon * slices as f64).ceil() as usize).clamp(1, slices);
            time_windowed(&bump, 0, active, slices, horizon)
        })
        .collect()
}

fn time_windowed(
    f: &GridFunction,
    first: usize,
    end: usize,
    slices: usize,
    horizon: f64,
) -> Result<SpaceTimeFunction> {
    let zero = GridFunction::constant(f.grid().clone(), 0.0)?;
    let s = (0..slices)
        .map(|m| if (first..end).contains(&m) { f.clone() } else { zero.clone() })
        .collect();
    SpaceTimeFunction::new(s, (0.0, horizon))
}

/// Runs the standard panel and the shrinking family once, then tabulates
/// every `(p, q)` cell, admissible or not.
#[allow(clippy::too_many_arguments)]
pub fn krylov_sweep(
    model: &LevyModel,
    drift: &DriftSpec,
    panel: &[SpaceTimeFunction],
    family: &[SpaceTimeFunction],
    family_widths: &[f64],
    cells: &[(f64, f64)],
    law_curve: Option<&[EmpiricalMeasure]>,
    init: &EmpiricalMeasure,
    cfg: &SolverConfig,
) -> Result<Vec<SweepRow>> {
    if family.len() != family_widths.len() || family.len() < 2 {
        return Err(Error::arg("shrinking family needs one width per function and at least two"));
    }
    let all: Vec<SpaceTimeFunction> = panel.iter().chain(family).cloned().collect();
    let sides = path_integrals(model, drift, &all, law_curve, init, cfg, None)?;
    let split = |range: std::ops::Range<usize>| PathIntegrals {
        lhs: sides.lhs[range].to_vec(),
        drift_mass: sides.drift_mass,
        paths: sides.paths,
    };
    let panel_sides = split(0..panel.len());
    let family_sides = split(panel.len()..all.len());
    cells
        .iter()
        .map(|&(p, q)| {
            let main = ratios_from(model, &panel_sides, panel, p, q)?;
            let fam = ratios_from(model, &family_sides, family, p, q)?;
            let ratios: Vec<f64> = fam.entries.iter().map(|e| e.ratio).collect();
            let trend = fit_loglog(family_widths, &ratios)?.slope;
            Ok(SweepRow {
                p,
                q,
                gate: main.gate,
                panel_max: main.panel_max,
                panel_median: main.panel_median,
                trend,
            })
        })
        .collect()
}

pub const STANDARD_PANEL_SIZE: usize = 20;
const PANEL_SLICES: usize = 16;
const PANEL_WIDTHS: [f64; 5] = [0.15, 0.25, 0.4, 0.6, 1.0];
const PANEL_CENTERS: [f64; 4] = [0.0, 0.3, -0.6, 0.9];
/// Active slice ranges out of [`PANEL_SLICES`].
const PANEL_SUPPORTS: [(usize, usize); 4] = [(0, 16), (0, 8), (8, 16), (4, 12)];

/// Twenty Gaussian bumps: five widths, four centres along the first axis
/// and four time supports (whole horizon, either half, middle half).
pub fn standard_panel(grid: &GridSpec, horizon: f64) -> Result<Vec<SpaceTimeFunction>> {
    (0..STANDARD_PANEL_SIZE)
        .map(|i| {
            let width = PANEL_WIDTHS[i % PANEL_WIDTHS.len()];
            let block = i / PANEL_WIDTHS.len();
            let mut center = vec![0.0; grid.dim()];
            center[0] = PANEL_CENTERS[block];
            let (a, b) = PANEL_SUPPORTS[(i + block) % PANEL_SUPPORTS.len()];
            time_windowed(&gaussian_bump(grid, &center, width)?, a, b, PANEL_SLICES, horizon)
        })
        .collect()
}

/// CSV with columns `f_id,p,q,gate,lhs,drift_mass,f_norm,ratio`.
pub fn report_csv(report: &KrylovReport) -> String {
    let mut out = String::from("f_id,p,q,gate,lhs,drift_mass,f_norm,ratio\n");
    for e in &report.entries {
        out.push_str(&format!(
            "{},{:.16e},{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            e.f_id,
            report.p,
            report.q,
            if report.gate { "admissible" } else { "inadmissible" },
            e.lhs,
            e.drift_mass,
            e.f_norm,
            e.ratio
        ));
    }
    out
}
