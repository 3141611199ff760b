//! Drift coefficients `b(t, x, mu)` and their (H2)/(H3) metadata.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use super::mollify::Mollified;
use crate::error::{Error, Result};
use crate::kernel::MixedNormSpec;
use crate::measure::EmpiricalMeasure;

/// Measure-free drift `b(t, x)` writing into `out`.
pub type PointFn = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;
/// Kernel `K(x, y)` of a convolution-type dependence.
pub type KernelFn = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;
/// Outer map `beta(t, x, kbar)` of a convolution-type dependence.
pub type OuterFn = Arc<dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;
/// Arbitrary `b(t, x, mu)`.
pub type MeasureFn = Arc<dyn Fn(f64, &[f64], &EmpiricalMeasure, &mut [f64]) + Send + Sync>;
/// Scalar envelope `G(t, x)`.
pub type EnvelopeFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

/// How the drift depends on its measure argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureDependence {
    Free,
    /// `beta(t, x, int K(x, y) mu(dy))`.
    Convolution,
    Opaque,
}

/// The map `b(t, x, mu)`.
#[derive(Clone)]
pub enum DriftField {
    Zero { dim: usize },
    /// `A x + c`.
    Linear { matrix: DMatrix<f64>, offset: Vec<f64> },
    /// `-rate (x - mean(mu))`.
    MeanReverting { dim: usize, rate: f64 },
    /// `scale sign(x_i)` per coordinate (`sign(0) = 0`).
    Sign { dim: usize, scale: f64 },
    /// `|x|^{-exponent} 1_{|x| <= radius} e`, `e = (1, .., 1)/sqrt(d)`.
    PowerSingular { dim: usize, exponent: f64, radius: f64 },
    MeasureFree { dim: usize, f: PointFn },
    Convolution {
        dim: usize,
        kernel_dim: usize,
        kernel: KernelFn,
        outer: OuterFn,
    },
    Opaque { dim: usize, f: MeasureFn },
    Mollified(Box<Mollified>),
}

impl fmt::Debug for DriftField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DriftField::Zero { dim } => write!(f, "Zero(d={dim})"),
            DriftField::Linear { matrix, offset } => write!(f, "Linear({matrix:?}, {offset:?})"),
            DriftField::MeanReverting { dim, rate } => write!(f, "MeanReverting(d={dim}, rate={rate})"),
            DriftField::Sign { dim, scale } => write!(f, "Sign(d={dim}, scale={scale})"),
            DriftField::PowerSingular { dim, exponent, radius } => {
                write!(f, "PowerSingular(d={dim}, exponent={exponent}, radius={radius})")
            }
            DriftField::MeasureFree { dim, .. } => write!(f, "MeasureFree(d={dim})"),
            DriftField::Convolution { dim, kernel_dim, .. } => {
                write!(f, "Convolution(d={dim}, k={kernel_dim})")
            }
            DriftField::Opaque { dim, .. } => write!(f, "Opaque(d={dim})"),
            DriftField::Mollified(m) => write!(f, "Mollified(n={}, {:?})", m.n, m.base),
        }
    }
}

impl DriftField {
    pub fn dim(&self) -> usize {
        match self {
            DriftField::Zero { dim }
            | DriftField::MeanReverting { dim, .. }
            | DriftField::Sign { dim, .. }
            | DriftField::PowerSingular { dim, .. }
            | DriftField::MeasureFree { dim, .. }
            | DriftField::Convolution { dim, .. }
            | DriftField::Opaque { dim, .. } => *dim,
            DriftField::Linear { matrix, .. } => matrix.nrows(),
            DriftField::Mollified(m) => m.base.dim(),
        }
    }

    pub fn dependence(&self) -> MeasureDependence {
        match self {
            DriftField::MeanReverting { .. } | DriftField::Convolution { .. } => {
                MeasureDependence::Convolution
            }
            DriftField::Opaque { .. } => MeasureDependence::Opaque,
            DriftField::Mollified(m) => m.base.dependence(),
            _ => MeasureDependence::Free,
        }
    }

    /// Fixes the measure argument at time `t`.
    pub fn freeze<'a>(&'a self, t: f64, mu: &'a EmpiricalMeasure) -> FrozenDrift<'a> {
        let context = match self {
            DriftField::MeanReverting { .. } => Context::Mean(mu.mean()),
            DriftField::Mollified(m) => match &m.base {
                DriftField::MeanReverting { .. } => Context::Mean(mu.mean()),
                DriftField::Convolution { .. } | DriftField::Opaque { .. } => Context::Measure(mu),
                _ => Context::None,
            },
            DriftField::Convolution { .. } | DriftField::Opaque { .. } => Context::Measure(mu),
            _ => Context::None,
        };
        FrozenDrift {
            field: self,
            t,
            context,
        }
    }

    /// `b(t, x, mu)` for a single point; prefer [`freeze`](Self::freeze) in loops.
    pub fn evaluate(&self, t: f64, x: &[f64], mu: &EmpiricalMeasure) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.freeze(t, mu).eval(x, &mut out);
        out
    }
}

#[derive(Debug)]
pub(crate) enum Context<'a> {
    None,
    Mean(Vec<f64>),
    Measure(&'a EmpiricalMeasure),
}

/// A drift with its measure argument fixed.
#[derive(Debug)]
pub struct FrozenDrift<'a> {
    field: &'a DriftField,
    t: f64,
    context: Context<'a>,
}

impl FrozenDrift<'_> {
    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        match self.field {
            DriftField::Mollified(m) => m.eval(self.t, x, &self.context, out),
            field => eval_plain(field, self.t, x, &self.context, out),
        }
    }
}

/// Averages `K(x, y)` over `mu`.
pub(crate) fn kernel_average(
    kernel: &KernelFn,
    kernel_dim: usize,
    x: &[f64],
    mu: &EmpiricalMeasure,
    out: &mut [f64],
) {
    out[..kernel_dim].fill(0.0);
    let mut k = vec![0.0; kernel_dim];
    for i in 0..mu.len() {
        kernel(x, mu.particle(i), &mut k);
        let w = mu.weights()[i];
        for (o, v) in out.iter_mut().zip(&k) {
            *o += w * v;
        }
    }
}

pub(crate) fn eval_plain(field: &DriftField, t: f64, x: &[f64], ctx: &Context<'_>, out: &mut [f64]) {
    match field {
        DriftField::Zero { .. } => out.fill(0.0),
        DriftField::Linear { matrix, offset } => {
            for i in 0..out.len() {
                let mut s = offset[i];
                for (j, xj) in x.iter().enumerate() {
                    s += matrix[(i, j)] * xj;
                }
                out[i] = s;
            }
        }
        DriftField::MeanReverting { rate, .. } => {
            let Context::Mean(m) = ctx else {
                unreachable!("mean-reverting drift frozen without its mean")
            };
            for i in 0..out.len() {
                out[i] = -rate * (x[i] - m[i]);
            }
        }
        DriftField::Sign { scale, .. } => {
            for (o, v) in out.iter_mut().zip(x) {
                *o = if *v > 0.0 {
                    *scale
                } else if *v < 0.0 {
                    -scale
                } else {
                    0.0
                };
            }
        }
        DriftField::PowerSingular { exponent, radius, .. } => {
            let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let value = if r <= *radius && r > 0.0 {
                r.powf(-exponent) / (out.len() as f64).sqrt()
            } else if r == 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            out.fill(value);
        }
        DriftField::MeasureFree { f, .. } => f(t, x, out),
        DriftField::Convolution {
            kernel_dim,
            kernel,
            outer,
            ..
        } => {
            let Context::Measure(mu) = ctx else {
                unreachable!("convolution drift frozen without its measure")
            };
            let mut kbar = vec![0.0; *kernel_dim];
            kernel_average(kernel, *kernel_dim, x, mu, &mut kbar);
            outer(t, x, &kbar, out);
        }
        DriftField::Opaque { f, .. } => {
            let Context::Measure(mu) = ctx else {
                unreachable!("opaque drift frozen without its measure")
            };
            f(t, x, mu, out);
        }
        DriftField::Mollified(_) => unreachable!("mollified drifts dispatch separately"),
    }
}

/// Envelope `G` with the mixed norm it is declared to lie in.
#[derive(Clone)]
pub struct Envelope {
    pub g: EnvelopeFn,
    pub norm: MixedNormSpec,
}

impl fmt::Debug for Envelope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Envelope({:?})", self.norm)
    }
}

/// Drift together with its bounded part `K`, singular envelope `G` and,
/// for regular drifts, a Lipschitz modulus (constant in time).
#[derive(Debug, Clone)]
pub struct DriftSpec {
    pub field: DriftField,
    pub bounded_part: f64,
    pub singular_envelope: Option<Envelope>,
    pub lipschitz: Option<f64>,
}

impl DriftSpec {
    pub fn new(
        field: DriftField,
        bounded_part: f64,
        singular_envelope: Option<Envelope>,
        lipschitz: Option<f64>,
    ) -> Result<Self> {
        if !(bounded_part >= 0.0) {
            return Err(Error::arg("bounded part K must be non-negative"));
        }
        if let Some(l) = lipschitz {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::arg("Lipschitz modulus must be finite and non-negative"));
            }
        }
        if let DriftField::Linear { matrix, offset } = &field {
            if matrix.nrows() != matrix.ncols() || offset.len() != matrix.nrows() {
                return Err(Error::arg("linear drift needs a square matrix and matching offset"));
            }
        }
        if field.dim() == 0 {
            return Err(Error::arg("drift dimension must be positive"));
        }
        Ok(Self {
            field,
            bounded_part,
            singular_envelope,
            lipschitz,
        })
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(DriftField::Zero { dim }, 0.0, None, Some(0.0)).expect("zero drift is valid")
    }

    /// `A x + c`; Lipschitz modulus is the spectral norm of `A`.
    pub fn linear(matrix: DMatrix<f64>, offset: Vec<f64>) -> Result<Self> {
        let norm = matrix.clone().svd(false, false).singular_values.max();
        Self::new(DriftField::Linear { matrix, offset }, 0.0, None, Some(norm))
    }

    /// `-rate (x - mean(mu))`, Lipschitz in `(x, W_theta)` with modulus `rate`.
    pub fn mean_reverting(dim: usize, rate: f64) -> Result<Self> {
        if !(rate >= 0.0 && rate.is_finite()) {
            return Err(Error::arg("mean-reversion rate must be non-negative"));
        }
        Self::new(DriftField::MeanReverting { dim, rate }, 0.0, None, Some(rate))
    }

    /// `scale sign(x)`: bounded by `K = scale sqrt(d)`, no envelope, not Lipschitz.
    pub fn sign(dim: usize, scale: f64) -> Result<Self> {
        Self::new(
            DriftField::Sign { dim, scale },
            scale.abs() * (dim as f64).sqrt(),
            None,
            None,
        )
    }

    /// `|x|^{-exponent} 1_{|x| <= radius}` with itself as envelope in `L^q L^p`.
    pub fn power_singular(dim: usize, exponent: f64, radius: f64, norm: MixedNormSpec) -> Result<Self> {
        if !(exponent > 0.0 && exponent * norm.p < dim as f64) {
            return Err(Error::arg(format!(
                "|x|^-{exponent} is not locally in L^{} in dimension {dim}",
                norm.p
            )));
        }
        if !(radius > 0.0) {
            return Err(Error::arg("singular drift radius must be positive"));
        }
        let g: EnvelopeFn = Arc::new(move |_t, x: &[f64]| {
            let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if r <= radius {
                r.powf(-exponent)
            } else {
                0.0
            }
        });
        Self::new(
            DriftField::PowerSingular { dim, exponent, radius },
            0.0,
            Some(Envelope { g, norm }),
            None,
        )
    }

    /// `G(t, x) + K` (with `G = 0` when no envelope is declared).
    pub fn envelope_value(&self, t: f64, x: &[f64]) -> f64 {
        self.bounded_part + self.singular_envelope.as_ref().map_or(0.0, |e| (e.g)(t, x))
    }
}
