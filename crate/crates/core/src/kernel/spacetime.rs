use super::grid::GridFunction;
use crate::error::{Error, Result};

/// `L^q([S, T]; L^p)`; infinite exponents are allowed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixedNormSpec {
    pub p: f64,
    pub q: f64,
    pub window: (f64, f64),
}

impl MixedNormSpec {
    pub fn new(p: f64, q: f64, window: (f64, f64)) -> Result<Self> {
        let spec = Self { p, q, window };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p >= 1.0 && self.q >= 1.0) {
            return Err(Error::arg(format!(
                "mixed norm exponents must be >= 1 (p = {}, q = {})",
                self.p, self.q
            )));
        }
        let (s, t) = self.window;
        if !(s >= 0.0 && s < t && t.is_finite()) {
            return Err(Error::arg(format!("time window [{s}, {t}] must satisfy 0 <= S < T")));
        }
        Ok(())
    }

    pub fn length(&self) -> f64 {
        self.window.1 - self.window.0
    }
}

/// Inner grid `L^p` per slice, outer Riemann `L^q` over slices spread
/// uniformly on the window.
pub fn mixed_norm(slices: &[GridFunction], spec: MixedNormSpec) -> Result<f64> {
    spec.validate()?;
    if slices.is_empty() {
        return Err(Error::arg("mixed norm needs at least one time slice"));
    }
    let inner: Vec<f64> = slices.iter().map(|f| f.lp_norm(spec.p)).collect();
    if spec.q.is_infinite() {
        return Ok(inner.iter().cloned().fold(0.0, f64::max));
    }
    let dt = spec.length() / slices.len() as f64;
    let scale = inner.iter().cloned().fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(0.0);
    }
    let terms: Vec<f64> = inner.iter().map(|v| (v / scale).powf(spec.q)).collect();
    Ok(scale * (crate::numerics::pairwise_sum(&terms) * dt).powf(1.0 / spec.q))
}

/// Piecewise-constant-in-time function on `[S, T)` with grid slices.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeFunction {
    slices: Vec<GridFunction>,
    window: (f64, f64),
}

impl SpaceTimeFunction {
    pub fn new(slices: Vec<GridFunction>, window: (f64, f64)) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::arg("space-time function needs at least one slice"))?;
        if slices.iter().any(|s| s.grid() != first.grid()) {
            return Err(Error::arg("space-time slices live on different grids"));
        }
        MixedNormSpec::new(1.0, 1.0, window)?;
        Ok(Self { slices, window })
    }

    /// Time-independent function on the window.
    pub fn stationary(f: GridFunction, window: (f64, f64)) -> Result<Self> {
        Self::new(vec![f], window)
    }

    pub fn slices(&self) -> &[GridFunction] {
        &self.slices
    }

    pub fn window(&self) -> (f64, f64) {
        self.window
    }

    pub fn dim(&self) -> usize {
        self.slices[0].grid().dim()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            slices: self.slices.iter().map(|s| s.scaled(c)).collect(),
            window: self.window,
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        self.slices.iter().all(|s| s.values().iter().all(|v| *v >= 0.0))
    }

    /// `f(t, x)`; zero outside the window and the grid box.
    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        let (s, e) = self.window;
        if t < s || t > e {
            return 0.0;
        }
        let n = self.slices.len();
        let k = (((t - s) / (e - s)) * n as f64).floor() as usize;
        self.slices[k.min(n - 1)].interpolate(x)
    }

    pub fn norm(&self, p: f64, q: f64) -> Result<f64> {
        mixed_norm(&self.slices, MixedNormSpec::new(p, q, self.window)?)
    }
}
