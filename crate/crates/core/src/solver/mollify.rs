//! Smooth, bounded, Lipschitz approximations `b^n` of a drift.
//!
//! The mollifier is a centred Gaussian with standard deviation `1/n`; the
//! measure argument is smoothed by the same kernel, and values are truncated
//! at Euclidean norm `n`.

use std::f64::consts::SQRT_2;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::function::erf::erf;

use super::drift::{eval_plain, Context, DriftField, DriftSpec, Envelope, MeasureDependence};
use crate::error::{Error, Result};
use crate::measure::{wasserstein_theta, EmpiricalMeasure};
use crate::numerics::{gaussian_expectation_rule, integrate, QuadOptions};

/// Safety factor applied to sampled difference quotients.
pub const LIPSCHITZ_SAFETY: f64 = 2.0;

const PROBE_SEED: u64 = 0x6d6f_6c6c;
const TABLE_STEPS_PER_WIDTH: f64 = 64.0;
const TABLE_MAX_POINTS: usize = 1 << 17;

/// Tensor Gaussian rule: weights and offsets (row-major `len x dim`).
#[derive(Debug, Clone)]
struct TensorRule {
    weights: Vec<f64>,
    offsets: Vec<f64>,
    dim: usize,
}

impl TensorRule {
    fn new(dim: usize, per_axis: usize) -> Self {
        let (z, w) = gaussian_expectation_rule(per_axis);
        let count = per_axis.pow(dim as u32);
        let mut weights = Vec::with_capacity(count);
        let mut offsets = Vec::with_capacity(count * dim);
        for flat in 0..count {
            let mut rest = flat;
            let mut weight = 1.0;
            for _ in 0..dim {
                let k = rest % per_axis;
                rest /= per_axis;
                weight *= w[k];
                offsets.push(z[k]);
            }
            weights.push(weight);
        }
        Self {
            weights,
            offsets,
            dim,
        }
    }

    fn len(&self) -> usize {
        self.weights.len()
    }

    fn offset(&self, j: usize) -> &[f64] {
        &self.offsets[j * self.dim..(j + 1) * self.dim]
    }
}

fn rule_size(dim: usize, outer: bool) -> Option<usize> {
    match (dim, outer) {
        (1, true) => Some(24),
        (1, false) => Some(8),
        (2, true) => Some(10),
        (2, false) => Some(4),
        (3, true) => Some(6),
        (3, false) => Some(3),
        (4, _) | (5, _) => Some(if outer { 4 } else { 2 }),
        _ => None,
    }
}

/// `(G_sigma * |.|^{-gamma} 1_{[-r, r]})` tabulated on a uniform grid.
#[derive(Debug, Clone)]
struct Table {
    lo: f64,
    step: f64,
    values: Vec<f64>,
}

impl Table {
    fn power_singular(exponent: f64, radius: f64, sigma: f64) -> Result<Self> {
        let half = radius + 10.0 * sigma;
        let mut count = (2.0 * half * TABLE_STEPS_PER_WIDTH / sigma).ceil() as usize + 1;
        count = count.min(TABLE_MAX_POINTS);
        let step = 2.0 * half / (count - 1) as f64;
        let top = radius.powf(1.0 - exponent);
        let norm = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
        let power = 1.0 / (1.0 - exponent);
        let values = (0..count)
            .into_par_iter()
            .map(|i| {
                let x = -half + i as f64 * step;
                // u = v^{1/(1-gamma)} absorbs the endpoint singularity
                let integrand = |v: f64| {
                    let u = v.powf(power);
                    let a = (x - u) / sigma;
                    let b = (x + u) / sigma;
                    norm * power * ((-0.5 * a * a).exp() + (-0.5 * b * b).exp())
                };
                let mut total = 0.0;
                // split at the peak so the adaptive rule sees it
                let peak = x.abs().min(radius).powf(1.0 - exponent);
                for (a, b) in [(0.0, peak), (peak, top)] {
                    total += integrate(integrand, a, b, QuadOptions::new(1e-12, 1e-11))?.value;
                }
                Ok(total)
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(Self {
            lo: -half,
            step,
            values,
        })
    }

    fn eval(&self, x: f64) -> f64 {
        let s = (x - self.lo) / self.step;
        if !(s >= 0.0) || s > (self.values.len() - 1) as f64 {
            return 0.0;
        }
        let i = (s.floor() as usize).min(self.values.len() - 2);
        let frac = s - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }
}

/// `b^n` for one `n`.
#[derive(Debug, Clone)]
pub struct Mollified {
    pub n: usize,
    pub base: DriftField,
    outer: Option<TensorRule>,
    inner: Option<TensorRule>,
    table: Option<Table>,
}

impl Mollified {
    pub fn new(base: DriftField, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::arg("mollification index must be positive"));
        }
        let base = match base {
            DriftField::Mollified(m) => m.base,
            other => other,
        };
        if base.dependence() == MeasureDependence::Opaque {
            return Err(Error::Unsupported(
                "mollification needs a measure-free or convolution-type drift".into(),
            ));
        }
        let sigma = 1.0 / n as f64;
        let dim = base.dim();
        let mut outer = None;
        let mut inner = None;
        let mut table = None;
        match &base {
            DriftField::PowerSingular {
                dim,
                exponent,
                radius,
            } => {
                if *dim != 1 {
                    return Err(Error::Unsupported(
                        "mollified radial singular drifts are tabulated in one dimension only".into(),
                    ));
                }
                table = Some(Table::power_singular(*exponent, *radius, sigma)?);
            }
            DriftField::MeasureFree { .. } | DriftField::Convolution { .. } => {
                let unsupported =
                    || Error::Unsupported(format!("mollification quadrature in dimension {dim}"));
                outer = Some(TensorRule::new(dim, rule_size(dim, true).ok_or_else(unsupported)?));
                if let DriftField::Convolution { .. } = &base {
                    inner = Some(TensorRule::new(dim, rule_size(dim, false).ok_or_else(unsupported)?));
                }
            }
            _ => {}
        }
        Ok(Self {
            n,
            base,
            outer,
            inner,
            table,
        })
    }

    pub fn width(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub(crate) fn eval(&self, t: f64, x: &[f64], ctx: &Context<'_>, out: &mut [f64]) {
        let sigma = self.width();
        match &self.base {
            DriftField::Sign { scale, .. } => {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = scale * erf(*v / (sigma * SQRT_2));
                }
            }
            DriftField::PowerSingular { .. } => {
                let table = self.table.as_ref().expect("table built at construction");
                out.fill(table.eval(x[0]));
            }
            DriftField::MeasureFree { f, .. } => {
                let rule = self.outer.as_ref().expect("rule built at construction");
                let mut y = vec![0.0; x.len()];
                let mut v = vec![0.0; out.len()];
                out.fill(0.0);
                for j in 0..rule.len() {
                    for ((yi, xi), z) in y.iter_mut().zip(x).zip(rule.offset(j)) {
                        *yi = xi + sigma * z;
                    }
                    f(t, &y, &mut v);
                    for (o, vi) in out.iter_mut().zip(&v) {
                        *o += rule.weights[j] * vi;
                    }
                }
            }
            DriftField::Convolution {
                kernel,
                kernel_dim,
                outer,
                ..
            } => {
                let Context::Measure(mu) = ctx else {
                    unreachable!("convolution drift frozen without its measure")
                };
                let rule = self.outer.as_ref().expect("rule built at construction");
                let inner = self.inner.as_ref().expect("rule built at construction");
                let mut y = vec![0.0; x.len()];
                let mut kbar = vec![0.0; *kernel_dim];
                let mut v = vec![0.0; out.len()];
                out.fill(0.0);
                for j in 0..rule.len() {
                    for ((yi, xi), z) in y.iter_mut().zip(x).zip(rule.offset(j)) {
                        *yi = xi + sigma * z;
                    }
                    smoothed_kernel_average(kernel, *kernel_dim, &y, mu, inner, sigma, &mut kbar);
                    outer(t, &y, &kbar, &mut v);
                    for (o, vi) in out.iter_mut().zip(&v) {
                        *o += rule.weights[j] * vi;
                    }
                }
            }
            // affine in x and in the mean: Gaussian smoothing leaves them unchanged
            DriftField::Zero { .. } | DriftField::Linear { .. } | DriftField::MeanReverting { .. } => {
                eval_plain(&self.base, t, x, ctx, out)
            }
            DriftField::Opaque { .. } | DriftField::Mollified(_) => {
                unreachable!("rejected at construction")
            }
        }
        let level = self.n as f64;
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > level {
            for o in out.iter_mut() {
                *o *= level / norm;
            }
        }
    }
}

/// `int K(x, y) (mu * G_sigma)(dy)` by a tensor rule per particle.
fn smoothed_kernel_average(
    kernel: &super::drift::KernelFn,
    kernel_dim: usize,
    x: &[f64],
    mu: &EmpiricalMeasure,
    rule: &TensorRule,
    sigma: f64,
    out: &mut [f64],
) {
    out[..kernel_dim].fill(0.0);
    let mut y = vec![0.0; mu.dim()];
    let mut k = vec![0.0; kernel_dim];
    for i in 0..mu.len() {
        let w = mu.weights()[i];
        for j in 0..rule.len() {
            for ((yi, pi), z) in y.iter_mut().zip(mu.particle(i)).zip(rule.offset(j)) {
                *yi = pi + sigma * z;
            }
            kernel(x, &y, &mut k);
            for (o, v) in out.iter_mut().zip(&k) {
                *o += w * rule.weights[j] * v;
            }
        }
    }
}

/// Half-width of the cube on which moduli and envelopes are probed.
pub(crate) fn probe_box(field: &DriftField) -> f64 {
    match field {
        DriftField::PowerSingular { radius, .. } => 2.0 * radius,
        DriftField::Mollified(m) => probe_box(&m.base),
        _ => 4.0,
    }
}

fn random_measure(rng: &mut ChaCha8Rng, dim: usize, count: usize) -> EmpiricalMeasure {
    let pts: Vec<f64> = (0..dim * count).map(|_| rng.sample(StandardNormal)).collect();
    EmpiricalMeasure::uniform(dim, pts).expect("finite normal draws")
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Largest sampled quotient `|b(t,x,mu) - b(t,y,nu)| / (|x - y| + W_1(mu, nu))`.
///
/// `W_1 <= W_theta` for `theta >= 1`, so the quotient dominates the one taken
/// with `W_theta`.
pub fn estimate_lipschitz(field: &DriftField, horizon: f64, samples: usize, seed: u64) -> Result<f64> {
    let dim = field.dim();
    let half = probe_box(field);
    let scale = match field {
        DriftField::Mollified(m) => m.width(),
        _ => 1e-2,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut bx = vec![0.0; dim];
    let mut by = vec![0.0; dim];
    let dependent = field.dependence() != MeasureDependence::Free;
    for _ in 0..samples {
        let t = rng.random::<f64>() * horizon;
        let x: Vec<f64> = (0..dim).map(|_| (2.0 * rng.random::<f64>() - 1.0) * half).collect();
        // log-uniform separation from a hundredth of the width up to one
        let sep = (scale / 100.0) * (100.0 / scale).powf(rng.random::<f64>());
        let dir: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let dn = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        let y: Vec<f64> = x.iter().zip(&dir).map(|(a, u)| a + sep * u / dn).collect();
        let mu = random_measure(&mut rng, dim, 8);
        field.freeze(t, &mu).eval(&x, &mut bx);
        field.freeze(t, &mu).eval(&y, &mut by);
        worst = worst.max(dist(&bx, &by) / dist(&x, &y));
        if dependent {
            let shift: Vec<f64> = (0..mu.len() * dim)
                .map(|i| mu.particles()[i] + sep * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let nu = EmpiricalMeasure::uniform(dim, shift)?;
            let w = wasserstein_theta(&mu, &nu, 1.0)?.value;
            if w > 0.0 {
                field.freeze(t, &nu).eval(&x, &mut by);
                worst = worst.max(dist(&bx, &by) / w);
            }
        }
    }
    if dim == 1 {
        // deterministic sweep so narrow transition layers are not missed
        let mu = random_measure(&mut rng, 1, 8);
        let step = scale / 8.0;
        let count = ((2.0 * half / step).ceil() as usize).min(1 << 20);
        let frozen = field.freeze(0.0, &mu);
        let mut prev = vec![0.0];
        frozen.eval(&[-half], &mut prev);
        for i in 1..=count {
            let x = -half + i as f64 * step;
            frozen.eval(&[x], &mut bx);
            worst = worst.max((bx[0] - prev[0]).abs() / step);
            prev[0] = bx[0];
        }
    }
    if !worst.is_finite() {
        return Err(Error::numerical("sampled difference quotient is not finite", worst));
    }
    Ok(worst)
}

/// Envelope factor `c >= 1` and excess `e >= 0` with `|b| <= c G + K + e`
/// on a probe set.
fn envelope_fit(spec: &DriftSpec, field: &DriftField, horizon: f64, seed: u64) -> Result<(f64, f64)> {
    let dim = field.dim();
    let half = probe_box(field);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mu = random_measure(&mut rng, dim, 8);
    let mut b = vec![0.0; dim];
    let mut points: Vec<Vec<f64>> = (0..4000)
        .map(|_| (0..dim).map(|_| (2.0 * rng.random::<f64>() - 1.0) * half).collect())
        .collect();
    if dim == 1 {
        let step = match field {
            DriftField::Mollified(m) => m.width() / 16.0,
            _ => 1e-3,
        };
        let count = ((2.0 * half / step).ceil() as usize).min(1 << 20);
        points.extend((0..=count).map(|i| vec![-half + i as f64 * step]));
        if let DriftField::Mollified(m) = field {
            if let DriftField::PowerSingular { radius, .. } = m.base {
                // just outside the support edge, where G drops to zero
                let r = radius * (1.0 + 1e-9);
                points.extend([vec![-r], vec![r]]);
            }
        }
    }
    let mut samples = Vec::with_capacity(points.len());
    for (j, x) in points.iter().enumerate() {
        let t = horizon * j as f64 / points.len() as f64;
        field.freeze(t, &mu).eval(x, &mut b);
        let norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(Error::numerical(format!("drift not finite at t = {t}, x = {x:?}"), norm));
        }
        let g = spec.singular_envelope.as_ref().map_or(0.0, |e| (e.g)(t, x));
        samples.push((norm, g));
    }
    let k = spec.bounded_part;
    let factor = samples
        .iter()
        .filter(|(_, g)| *g > 0.0 && g.is_finite())
        .map(|(b, g)| (b - k) / g)
        .fold(1.0f64, f64::max);
    let factor = if factor > 1.0 { 1.01 * factor } else { 1.0 };
    let excess = samples
        .iter()
        .map(|(b, g)| b - factor * g - k)
        .fold(0.0f64, f64::max);
    Ok((factor, excess))
}

/// `b^n` with its sampled Lipschitz modulus and an envelope of the base's
/// form.
///
/// Smoothing can lift `|b^n|` above `G` by a scale-free factor near a
/// singularity of `G`, and above `G + K` near the edge of `G`'s support. The
/// returned envelope is `c G` with the sampled factor `c >= 1`, and the edge
/// excess is added to `K`, both with a one-percent margin.
pub fn mollify_drift(base: &DriftSpec, n: usize) -> Result<DriftSpec> {
    let moll = Mollified::new(base.field.clone(), n)?;
    let analytic = matches!(
        moll.base,
        DriftField::Zero { .. } | DriftField::Linear { .. } | DriftField::MeanReverting { .. }
    );
    let field = DriftField::Mollified(Box::new(moll));
    let horizon = base
        .singular_envelope
        .as_ref()
        .map_or(1.0, |e| e.norm.window.1);
    let lipschitz = match (analytic, base.lipschitz) {
        (true, Some(l)) => l,
        _ => LIPSCHITZ_SAFETY * estimate_lipschitz(&field, horizon, 4000, PROBE_SEED)?,
    };
    let mut bounded = base.bounded_part;
    let mut envelope = base.singular_envelope.clone();
    if base.singular_envelope.is_some() || base.bounded_part > 0.0 {
        let (factor, excess) = envelope_fit(base, &field, horizon, PROBE_SEED ^ 1)?;
        if excess > 0.0 {
            bounded += 1.01 * excess;
        }
        if factor > 1.0 {
            envelope = envelope.map(|e| {
                let g = e.g.clone();
                Envelope {
                    g: Arc::new(move |t, x: &[f64]| factor * g(t, x)),
                    norm: e.norm,
                }
            });
        }
    }
    DriftSpec::new(field, bounded, envelope, Some(lipschitz))
}

/// Outcome of spot-checking `|b| <= G + K` on random triples `(t, x, mu)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeCheck {
    pub samples: usize,
    pub violations: usize,
    /// Largest `|b| - (G + K)` seen (negative when every sample is inside).
    pub worst_excess: f64,
}

impl EnvelopeCheck {
    pub fn passes(&self) -> bool {
        self.violations == 0
    }
}

pub fn check_envelope(spec: &DriftSpec, horizon: f64, samples: usize, seed: u64) -> Result<EnvelopeCheck> {
    if spec.singular_envelope.is_none() && spec.bounded_part == 0.0 {
        return Err(Error::arg("drift declares no envelope to check"));
    }
    let dim = spec.dim();
    let half = probe_box(&spec.field);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = vec![0.0; dim];
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..samples {
        let t = rng.random::<f64>() * horizon;
        let x: Vec<f64> = (0..dim).map(|_| (2.0 * rng.random::<f64>() - 1.0) * half).collect();
        let mu = random_measure(&mut rng, dim, 8);
        spec.field.freeze(t, &mu).eval(&x, &mut b);
        let norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        let bound = spec.envelope_value(t, &x);
        let excess = norm - bound;
        if !(norm <= bound * (1.0 + 1e-12) + 1e-15) {
            violations += 1;
        }
        worst = worst.max(excess);
    }
    Ok(EnvelopeCheck {
        samples,
        violations,
        worst_excess: worst,
    })
}

/// Sampled quotient against the declared modulus.
#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzCheck {
    pub max_quotient: f64,
    pub modulus: f64,
}

impl LipschitzCheck {
    pub fn passes(&self) -> bool {
        self.max_quotient <= self.modulus * (1.0 + 1e-6)
    }
}

pub fn check_lipschitz(spec: &DriftSpec, horizon: f64, samples: usize, seed: u64) -> Result<LipschitzCheck> {
    let modulus = spec
        .lipschitz
        .ok_or_else(|| Error::arg("drift declares no Lipschitz modulus"))?;
    Ok(LipschitzCheck {
        max_quotient: estimate_lipschitz(&spec.field, horizon, samples, seed)?,
        modulus,
    })
}
