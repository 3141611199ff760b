//! Experiment configuration: a TOML file plus `--set key=value` overrides.

use std::path::Path;

use anyhow::{anyhow, Context, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use levymv::kernel::MixedNormSpec;
use levymv::levy_model::LevyModel;
use levymv::solver::{mollify_drift, DriftSpec, SolverConfig};

/// Anything wrong with the configuration itself (exit status 2).
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "configuration error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(ConfigError(msg.into()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, serialize_with = "seed_as_toml")]
    pub seed: u64,
    pub model: ModelBlock,
    #[serde(default)]
    pub drift: DriftBlock,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub init: InitBlock,
    #[serde(default)]
    pub picard: PicardBlock,
    #[serde(default)]
    pub probe: ProbeBlock,
    #[serde(default)]
    pub krylov: KrylovBlock,
    #[serde(default)]
    pub admissible: AdmissibleBlock,
    /// Left out of output headers so runs written to different places compare equal.
    #[serde(default, skip_serializing)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "kind")]
pub enum ModelBlock {
    Brownian { dim: usize },
    Gaussian { covariance: Vec<Vec<f64>> },
    IsotropicStable { dim: usize, alpha: f64 },
    CylindricalStable { dim: usize, alpha: f64 },
    TemperedStable { dim: usize, alpha: f64, rate: f64 },
    TruncatedStable { dim: usize, alpha: f64, level: f64 },
    Superposition { components: Vec<ModelBlock> },
}

impl ModelBlock {
    pub fn build(&self) -> levymv::Result<LevyModel> {
        match self {
            ModelBlock::Brownian { dim } => {
                if *dim == 0 {
                    return Err(levymv::Error::ModelInvalid("dimension must be positive".into()));
                }
                Ok(LevyModel::brownian(*dim))
            }
            ModelBlock::Gaussian { covariance } => LevyModel::gaussian(square(covariance, "covariance")?),
            ModelBlock::IsotropicStable { dim, alpha } => LevyModel::isotropic_stable(*dim, *alpha),
            ModelBlock::CylindricalStable { dim, alpha } => LevyModel::cylindrical_stable(*dim, *alpha),
            ModelBlock::TemperedStable { dim, alpha, rate } => LevyModel::tempered_stable(*dim, *alpha, *rate),
            ModelBlock::TruncatedStable { dim, alpha, level } => {
                LevyModel::truncated_stable(*dim, *alpha, *level)
            }
            ModelBlock::Superposition { components } => LevyModel::superposition(
                components.iter().map(|c| c.build()).collect::<levymv::Result<Vec<_>>>()?,
            ),
        }
    }
}

fn square(rows: &[Vec<f64>], what: &str) -> levymv::Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(levymv::Error::ModelInvalid(format!("{what} must be a non-empty square matrix")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// Built-in drifts. `mollify = n` replaces the drift by its mollified `b^n`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "kind")]
pub enum DriftBlock {
    Zero {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mollify: Option<usize>,
    },
    Linear {
        matrix: Vec<Vec<f64>>,
        offset: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mollify: Option<usize>,
    },
    /// `b(x, mu) = -rate (x - mean(mu))`.
    MeanReverting {
        rate: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mollify: Option<usize>,
    },
    Sign {
        scale: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mollify: Option<usize>,
    },
    /// `|x|^{-exponent}` on the ball of `radius`, with envelope norm `L^q(L^p)`.
    PowerSingular {
        exponent: f64,
        radius: f64,
        p: f64,
        q: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mollify: Option<usize>,
    },
}

impl Default for DriftBlock {
    fn default() -> Self {
        DriftBlock::Zero { mollify: None }
    }
}

impl DriftBlock {
    pub fn mollify(&self) -> Option<usize> {
        match self {
            DriftBlock::Zero { mollify }
            | DriftBlock::Linear { mollify, .. }
            | DriftBlock::MeanReverting { mollify, .. }
            | DriftBlock::Sign { mollify, .. }
            | DriftBlock::PowerSingular { mollify, .. } => *mollify,
        }
    }

    pub fn build(&self, dim: usize, horizon: f64) -> levymv::Result<DriftSpec> {
        let base = match self {
            DriftBlock::Zero { .. } => DriftSpec::zero(dim),
            DriftBlock::Linear { matrix, offset, .. } => {
                let m = square(matrix, "drift matrix")?;
                if m.nrows() != dim {
                    return Err(levymv::Error::Argument(format!("drift matrix must be {dim} x {dim}")));
                }
                DriftSpec::linear(m, offset.clone())?
            }
            DriftBlock::MeanReverting { rate, .. } => DriftSpec::mean_reverting(dim, *rate)?,
            DriftBlock::Sign { scale, .. } => DriftSpec::sign(dim, *scale)?,
            DriftBlock::PowerSingular {
                exponent, radius, p, q, ..
            } => DriftSpec::power_singular(dim, *exponent, *radius, MixedNormSpec::new(*p, *q, (0.0, horizon))?)?,
        };
        match self.mollify() {
            Some(n) => mollify_drift(&base, n),
            None => Ok(base),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverBlock {
    pub horizon: f64,
    /// Defaults to `horizon / 512`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub particles: usize,
    pub theta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<f64>,
    /// `simulate` writes every `record_every`-th time node (and `T`); defaults to steps / 8.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_every: Option<usize>,
}

impl Default for SolverBlock {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            dt: None,
            particles: 1000,
            theta: 1.0,
            cutoff: None,
            record_every: None,
        }
    }
}

impl SolverBlock {
    pub fn build(&self, seed: u64) -> SolverConfig {
        let mut cfg = SolverConfig::new(self.horizon, self.particles, seed).with_theta(self.theta);
        if let Some(dt) = self.dt {
            cfg = cfg.with_dt(dt);
        }
        if let Some(c) = self.cutoff {
            cfg.small_jump_cutoff = c;
        }
        cfg
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "kind")]
pub enum InitBlock {
    /// Every particle at `at` (the origin by default).
    Point {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        at: Option<Vec<f64>>,
    },
    /// Independent `N(mean, sd^2)` coordinates.
    Normal { mean: f64, sd: f64 },
}

impl Default for InitBlock {
    fn default() -> Self {
        InitBlock::Point { at: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PicardBlock {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PicardBlock {
    fn default() -> Self {
        Self { tol: 1e-3, max_iter: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeCheck {
    Gradient,
    Smoothing,
    Continuity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeBlock {
    pub checks: Vec<ProbeCheck>,
    /// Exponents for the gradient probe.
    pub p: Vec<f64>,
    /// Exponents for the smoothing and continuity probes; their profiles are
    /// critical in `L^2`, so other values test a function outside the estimate.
    pub profile_p: Vec<f64>,
    /// Derivative orders for the gradient probe.
    pub orders: Vec<usize>,
    pub gamma: Vec<f64>,
    pub beta: f64,
    pub theta: Vec<f64>,
    pub gradient_t: Vec<f64>,
    pub smoothing_t: Vec<f64>,
    pub continuity_t: Vec<f64>,
    /// Grid for the gradient probe and its bump panel.
    pub gradient_extent: f64,
    pub gradient_resolution: usize,
    pub panel_widths: Vec<f64>,
    /// Grid for the smoothing and continuity profiles.
    pub profile_extent: f64,
    pub profile_resolution: usize,
}

pub fn geomspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| a * (b / a).powf(i as f64 / (n - 1) as f64))
        .collect()
}

impl Default for ProbeBlock {
    fn default() -> Self {
        Self {
            checks: vec![ProbeCheck::Gradient, ProbeCheck::Smoothing, ProbeCheck::Continuity],
            p: vec![2.0],
            profile_p: vec![2.0],
            orders: vec![1, 2],
            gamma: vec![1.0, 1.2],
            beta: 0.0,
            theta: vec![0.5, 1.0],
            gradient_t: geomspace(1e-3, 1e-1, 9),
            smoothing_t: geomspace(1e-4, 1e-2, 7),
            continuity_t: geomspace(1e-4, 1e-2, 7),
            gradient_extent: 16.0,
            gradient_resolution: 1 << 13,
            panel_widths: geomspace(0.005, 2.0, 36),
            profile_extent: 20.0,
            profile_resolution: 1 << 16,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KrylovBlock {
    /// `(p, q)` cells; inadmissible cells are reported, not enforced.
    pub cells: Vec<(f64, f64)>,
    pub extent: f64,
    pub resolution: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop_radius: Option<f64>,
    /// The panel passes when its max ratio is within this factor of its median.
    pub bound_factor: f64,
    /// Widths of the shrinking-bump family; empty skips the sweep.
    pub family_widths: Vec<f64>,
    pub family_slices: usize,
}

impl Default for KrylovBlock {
    fn default() -> Self {
        Self {
            cells: vec![(4.0, 8.0), (8.0, 16.0)],
            extent: 4.0,
            resolution: 1024,
            stop_radius: None,
            bound_factor: 10.0,
            family_widths: vec![],
            family_slices: 256,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdmissibleBlock {
    pub alpha: Vec<f64>,
    pub d: Vec<usize>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl Default for AdmissibleBlock {
    fn default() -> Self {
        Self {
            alpha: vec![1.5, 2.0],
            d: vec![1],
            p: vec![2.0, 4.0],
            q: vec![4.0, 8.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    pub dir: String,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

/// Splits `key=value`; the value is read as a TOML value, falling back to a
/// bare string.
fn parse_override(raw: &str) -> Result<(Vec<String>, Value)> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| config_error(format!("override `{raw}` is not of the form key=value")))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_owned).collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(config_error(format!("override key `{key}` has an empty segment")));
    }
    let value = value.trim();
    let parsed = toml::from_str::<Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(value.to_owned()));
    Ok((path, parsed))
}

fn apply_override(table: &mut Table, path: &[String], value: Value) -> Result<()> {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut cur = table;
    for seg in parents {
        let entry = cur
            .entry(seg.clone())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| config_error(format!("override path crosses non-table key `{seg}`")))?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}

/// Reads `path`, applies overrides in order, then `--seed` and `--out`.
pub fn load(path: &Path, overrides: &[String], seed: Option<u64>, out: Option<&str>) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading configuration {}", path.display()))?;
    let mut table: Table = toml::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
    let pristine = overrides.is_empty();
    for raw in overrides {
        let (p, v) = parse_override(raw)?;
        apply_override(&mut table, &p, v)?;
    }
    // parsing the original text keeps line numbers in diagnostics
    let source = if pristine { text } else { toml::to_string(&table)? };
    let mut config: ExperimentConfig = toml::from_str(&source).map_err(|e| {
        let origin = if pristine {
            path.display().to_string()
        } else {
            format!("{} (after --set overrides)", path.display())
        };
        config_error(format!("{origin}: {e}"))
    })?;
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(o) = out {
        config.output.dir = o.to_owned();
    }
    validate(&config)?;
    Ok(config)
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(config_error(msg()))
    }
}

fn validate(c: &ExperimentConfig) -> Result<()> {
    let s = &c.solver;
    check(s.horizon > 0.0 && s.horizon.is_finite(), || {
        format!("solver.horizon must be positive, got {}", s.horizon)
    })?;
    if let Some(dt) = s.dt {
        check(dt > 0.0 && dt <= s.horizon, || format!("solver.dt must lie in (0, horizon], got {dt}"))?;
    }
    check(s.particles >= 2, || "solver.particles must be at least 2".into())?;
    check(s.record_every != Some(0), || "solver.record_every must be positive".into())?;
    check(c.picard.tol > 0.0 && c.picard.max_iter >= 1, || {
        "picard.tol must be positive and picard.max_iter at least 1".into()
    })?;
    check(c.drift.mollify() != Some(0), || "drift.mollify must be a positive integer".into())?;
    let k = &c.krylov;
    check(k.bound_factor >= 1.0, || "krylov.bound_factor must be at least 1".into())?;
    check(k.family_widths.is_empty() || k.family_widths.len() >= 2, || {
        "krylov.family_widths needs at least two widths".into()
    })?;
    check(k.family_widths.iter().all(|w| *w > 0.0), || "krylov.family_widths must be positive".into())?;
    check(k.family_slices >= 1, || "krylov.family_slices must be positive".into())?;
    let a = &c.admissible;
    check(a.alpha.iter().all(|x| *x > 1.0 && *x <= 2.0), || {
        "admissible.alpha entries must lie in (1, 2]".into()
    })?;
    check(a.d.iter().all(|d| *d >= 1), || "admissible.d entries must be positive".into())?;
    check(a.p.iter().chain(&a.q).all(|x| *x >= 1.0), || {
        "admissible.p and admissible.q entries must be at least 1".into()
    })?;
    let p = &c.probe;
    check(p.orders.iter().all(|k| *k == 1 || *k == 2), || "probe.orders entries must be 1 or 2".into())?;
    check(p.p.iter().chain(&p.profile_p).all(|x| *x >= 1.0), || {
        "probe.p and probe.profile_p entries must be at least 1".into()
    })?;
    Ok(())
}

// TOML integers are signed; seeds above i64::MAX are echoed as strings.
fn seed_as_toml<S: serde::Serializer>(seed: &u64, s: S) -> std::result::Result<S::Ok, S::Error> {
    match i64::try_from(*seed) {
        Ok(v) => s.serialize_i64(v),
        Err(_) => s.serialize_str(&seed.to_string()),
    }
}

/// The config as TOML with every default filled in.
pub fn resolved_toml(c: &ExperimentConfig) -> Result<String> {
    Ok(toml::to_string(c)?)
}
