//! Radial modulators `rho(r)` of stable-type Lévy measures and the radial
//! part of the symbol, `I(s) = int_0^inf (1 - cos(r s)) r^{-1-alpha} rho(r) dr`.
//!
//! Every modulator has a closed form for `I`; [`RadialModulator::symbol_quadrature`]
//! evaluates the same integral by adaptive quadrature and is kept as an
//! independent route for cross-checking.

use std::f64::consts::{FRAC_PI_2, PI};

use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::numerics::{integrate, QuadOptions};

/// `rho` in `nu(dr, dtheta) = r^{-1-alpha} rho(r) dr mu(dtheta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadialModulator {
    /// `rho(r) = c` (pure stable).
    Constant(f64),
    /// `rho(r) = exp(-rate r)` (tempered stable).
    Exponential { rate: f64 },
    /// `rho(r) = level * 1_{[0, radius]}(r)` (truncated stable).
    Indicator { level: f64, radius: f64 },
}

/// Constants `C, C1, C2` with `1_{[0,C]}(r) <= C1 rho(r) <= C2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sandwich {
    pub c: f64,
    pub c1: f64,
    pub c2: f64,
}

/// `int_0^inf (1 - cos r) r^{-1-alpha} dr = -Gamma(-alpha) cos(pi alpha / 2)`.
pub fn stable_radial_constant(alpha: f64) -> f64 {
    -gamma(-alpha) * (PI * alpha / 2.0).cos()
}

/// Relative tolerance of the quadrature route.
pub const QUAD_REL_TOL: f64 = 1e-8;

impl RadialModulator {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            RadialModulator::Constant(c) => c > 0.0 && c.is_finite(),
            RadialModulator::Exponential { rate } => rate > 0.0 && rate.is_finite(),
            RadialModulator::Indicator { level, radius } => {
                level > 0.0 && level.is_finite() && radius > 0.0 && radius.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::model(format!("invalid radial modulator {self:?}")))
        }
    }

    pub fn value(&self, r: f64) -> f64 {
        match *self {
            RadialModulator::Constant(c) => c,
            RadialModulator::Exponential { rate } => (-rate * r).exp(),
            RadialModulator::Indicator { level, radius } => {
                if r <= radius {
                    level
                } else {
                    0.0
                }
            }
        }
    }

    pub fn sup(&self) -> f64 {
        match *self {
            RadialModulator::Constant(c) => c,
            RadialModulator::Exponential { .. } => 1.0,
            RadialModulator::Indicator { level, .. } => level,
        }
    }

    pub fn support_radius(&self) -> f64 {
        match *self {
            RadialModulator::Indicator { radius, .. } => radius,
            _ => f64::INFINITY,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, RadialModulator::Constant(_))
    }

    pub fn sandwich(&self) -> Sandwich {
        match *self {
            RadialModulator::Constant(c) => Sandwich {
                c: 1.0,
                c1: 1.0 / c,
                c2: 1.0,
            },
            RadialModulator::Exponential { rate } => Sandwich {
                c: 1.0,
                c1: rate.exp(),
                c2: rate.exp(),
            },
            RadialModulator::Indicator { level, radius } => Sandwich {
                c: radius,
                c1: 1.0 / level,
                c2: 1.0,
            },
        }
    }

    /// Closed form of `I(s)`.
    pub fn symbol_closed(&self, s: f64, alpha: f64) -> f64 {
        let s = s.abs();
        if s == 0.0 {
            return 0.0;
        }
        match *self {
            RadialModulator::Constant(c) => c * stable_radial_constant(alpha) * s.powf(alpha),
            RadialModulator::Exponential { rate } => {
                let g = gamma(-alpha);
                let base = (rate * rate + s * s).powf(alpha / 2.0) * (alpha * (s / rate).atan()).cos();
                -g * (base - rate.powf(alpha))
            }
            RadialModulator::Indicator { level, radius } => {
                // substitute u = r s on [0, radius]
                level * s.powf(alpha) * partial_stable_integral(radius * s, alpha)
            }
        }
    }

    /// `I(s)` by adaptive radial quadrature, split at `r = 1`.
    pub fn symbol_quadrature(&self, s: f64, alpha: f64) -> Result<f64> {
        let s = s.abs();
        if s == 0.0 {
            return Ok(0.0);
        }
        let opts = QuadOptions::new(1e-14, QUAD_REL_TOL * 1e-2);
        let support = self.support_radius();
        let inner_end = support.min(1.0);
        // r = v^m with m = 1/(2 - alpha) absorbs the r^{1-alpha} singularity;
        // (1 - cos(rs)) / r^2 is written as 2 sin^2(rs/2) / r^2 to avoid cancellation.
        let m = 1.0 / (2.0 - alpha);
        let inner = integrate(
            |v: f64| {
                if v <= 0.0 {
                    return m * s * s / 2.0 * self.value(0.0);
                }
                let r = v.powf(m);
                let h = (0.5 * r * s).sin();
                m * 2.0 * h * h / (r * r) * self.value(r)
            },
            0.0,
            inner_end.powf(2.0 - alpha),
            opts,
        )?
        .value;
        if support <= 1.0 {
            return Ok(inner);
        }
        let outer_integrand = |r: f64| (1.0 - (r * s).cos()) * r.powf(-1.0 - alpha) * self.value(r);
        if support.is_finite() {
            let outer = integrate(outer_integrand, 1.0, support, opts)?.value;
            return Ok(inner + outer);
        }
        // non-oscillatory part: int_1^inf rho r^{-1-alpha} dr with r = 1/u
        let plain = integrate(
            |u: f64| {
                if u <= 0.0 {
                    0.0
                } else {
                    self.value(1.0 / u) * u.powf(alpha - 1.0)
                }
            },
            0.0,
            1.0,
            opts,
        )?
        .value;
        let oscillatory = oscillatory_tail(|r| r.powf(-1.0 - alpha) * self.value(r), s)?;
        Ok(inner + plain - oscillatory)
    }

    /// `int_0^eps r^{k-1-alpha} rho(r) dr` for `k > alpha` (k = 2 gives the
    /// small-jump variance density, k = 4 the fourth moment).
    pub fn lower_moment(&self, eps: f64, alpha: f64, k: f64) -> f64 {
        let e = k - alpha;
        match *self {
            RadialModulator::Constant(c) => c * eps.powf(e) / e,
            RadialModulator::Indicator { level, radius } => level * eps.min(radius).powf(e) / e,
            RadialModulator::Exponential { rate } => {
                // r = v^{1/e}: the integral becomes (1/e) int_0^{eps^e} exp(-rate v^{1/e}) dv
                let m = 1.0 / e;
                integrate(
                    |v: f64| m * (-rate * v.max(0.0).powf(m)).exp(),
                    0.0,
                    eps.powf(e),
                    QuadOptions::new(1e-16, 1e-13),
                )
                .map(|q| q.value)
                .unwrap_or(eps.powf(e) / e)
            }
        }
    }

    /// Intensity of the envelope `sup(rho) r^{-1-alpha}` on `(eps, support]`.
    pub fn envelope_rate(&self, eps: f64, alpha: f64) -> f64 {
        let r = self.support_radius();
        if eps >= r {
            return 0.0;
        }
        let upper = if r.is_finite() { r.powf(-alpha) } else { 0.0 };
        self.sup() * (eps.powf(-alpha) - upper) / alpha
    }
}

/// `J(a) = int_0^a (1 - cos u) u^{-1-alpha} du`.
pub(crate) fn partial_stable_integral(a: f64, alpha: f64) -> f64 {
    const SERIES_LIMIT: f64 = 2.0;
    const ASYMPTOTIC_FROM: f64 = 40.0;
    if a <= SERIES_LIMIT {
        return stable_series(a, alpha);
    }
    if a >= ASYMPTOTIC_FROM {
        // J(a) = K - a^{-alpha}/alpha + int_a^inf cos(u) u^{-1-alpha} du
        let k = stable_radial_constant(alpha);
        return k - a.powf(-alpha) / alpha + cosine_tail_asymptotic(a, 1.0 + alpha);
    }
    let middle = integrate(
        |u: f64| {
            let h = (0.5 * u).sin();
            2.0 * h * h * u.powf(-1.0 - alpha)
        },
        SERIES_LIMIT,
        a,
        QuadOptions::new(1e-15, 1e-13),
    )
    .map(|q| q.value)
    .expect("smooth bounded integrand on a short interval");
    stable_series(SERIES_LIMIT, alpha) + middle
}

fn stable_series(a: f64, alpha: f64) -> f64 {
    let mut sum = 0.0;
    let mut fact = 1.0; // (2k)!
    let mut power = 1.0; // a^{2k}
    for k in 1..60 {
        let kk = 2 * k;
        fact *= ((kk - 1) * kk) as f64;
        power *= a * a;
        let term = power / (fact * (kk as f64 - alpha));
        if k % 2 == 1 {
            sum += term;
        } else {
            sum -= term;
        }
        if term < 1e-18 * sum.abs() {
            break;
        }
    }
    sum * a.powf(-alpha)
}

/// `Re int_a^inf e^{iu} u^{-nu} du` from the large-`a` expansion.
fn cosine_tail_asymptotic(a: f64, nu: f64) -> f64 {
    // int_a^inf e^{iu} u^{-nu} du = i e^{ia} a^{-nu} sum_k (-i)^k (nu)_k a^{-k}
    let mut re = 0.0;
    let mut im = 0.0;
    let mut coeff = 1.0;
    let (mut pr, mut pi) = (1.0, 0.0); // (-i)^k
    for k in 0..12 {
        re += coeff * pr;
        im += coeff * pi;
        coeff *= (nu + k as f64) / a;
        let (nr, ni) = (pi, -pr);
        pr = nr;
        pi = ni;
    }
    // multiply by i e^{ia} a^{-nu}
    let (c, s) = (a.cos(), a.sin());
    let (er, ei) = (-s, c);
    let scale = a.powf(-nu);
    scale * (er * re - ei * im)
}

/// `int_1^inf cos(r s) g(r) dr` for a positive, decreasing, integrable `g`,
/// summed over half-periods and accelerated with Wynn's epsilon algorithm.
fn oscillatory_tail<G: Fn(f64) -> f64>(g: G, s: f64) -> Result<f64> {
    let opts = QuadOptions::new(1e-16, 1e-12);
    let first = ((s - FRAC_PI_2) / PI).ceil().max(0.0);
    let zero = |j: f64| (FRAC_PI_2 + j * PI) / s;
    let mut z = zero(first);
    if z <= 1.0 {
        z = zero(first + 1.0);
    }
    let head = integrate(|r| (r * s).cos() * g(r), 1.0, z, opts)?;
    let mut partial = Vec::with_capacity(48);
    let mut acc = head.value;
    let mut j = ((z * s - FRAC_PI_2) / PI).round();
    for _ in 0..48 {
        let next = zero(j + 1.0);
        let piece = integrate(|r| (r * s).cos() * g(r), z, next, opts)?;
        acc += piece.value;
        partial.push(acc);
        z = next;
        j += 1.0;
    }
    let (value, residual) = wynn_epsilon(&partial);
    if residual > QUAD_REL_TOL * value.abs().max(1e-12) {
        return Err(Error::numerical(
            "oscillatory tail extrapolation did not settle",
            residual,
        ));
    }
    Ok(value)
}

/// Returns the extrapolated limit and the change between the last two estimates.
fn wynn_epsilon(partial: &[f64]) -> (f64, f64) {
    let n = partial.len();
    let mut prev = vec![0.0; n + 1];
    let mut cur: Vec<f64> = partial.to_vec();
    let mut best = *partial.last().unwrap();
    let mut last_best = partial[n - 2];
    let mut col = 0;
    while cur.len() > 1 {
        let mut next = Vec::with_capacity(cur.len() - 1);
        for k in 0..cur.len() - 1 {
            let diff = cur[k + 1] - cur[k];
            if diff == 0.0 {
                return (cur[k + 1], 0.0);
            }
            next.push(prev[k + 1] + 1.0 / diff);
        }
        prev = cur;
        cur = next;
        col += 1;
        if col % 2 == 0 && cur.len() >= 2 {
            last_best = cur[cur.len() - 2];
            best = cur[cur.len() - 1];
        }
    }
    (best, (best - last_best).abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_constant_matches_known_value() {
        assert!((stable_radial_constant(1.5) - 1.671_085_516_420_666_8).abs() < 1e-12);
    }

    #[test]
    fn partial_integral_is_continuous_across_branches() {
        for &alpha in &[1.2, 1.5, 1.9] {
            for &a in &[2.0, 40.0] {
                let lo = partial_stable_integral(a * (1.0 - 1e-12), alpha);
                let hi = partial_stable_integral(a * (1.0 + 1e-12), alpha);
                assert!((lo - hi).abs() < 1e-9, "alpha {alpha} a {a}: {lo} vs {hi}");
            }
            let a = 1e6f64;
            let far = partial_stable_integral(a, alpha);
            let expected = stable_radial_constant(alpha) - a.powf(-alpha) / alpha;
            assert!((far - expected).abs() < 1e-12 * expected);
        }
    }

    #[test]
    fn closed_forms_agree_with_quadrature() {
        let cases = [
            RadialModulator::Constant(1.0),
            RadialModulator::Constant(0.3),
            RadialModulator::Exponential { rate: 1.0 },
            RadialModulator::Exponential { rate: 0.2 },
            RadialModulator::Indicator {
                level: 1.0,
                radius: 1.0,
            },
            RadialModulator::Indicator {
                level: 2.0,
                radius: 3.5,
            },
        ];
        for rho in cases {
            for &alpha in &[1.2, 1.5, 1.8] {
                for &s in &[0.01, 0.3, 1.0, 2.0, 7.5, 60.0] {
                    let closed = rho.symbol_closed(s, alpha);
                    let quad = rho.symbol_quadrature(s, alpha).unwrap();
                    let rel = (closed - quad).abs() / closed.abs().max(1e-300);
                    assert!(rel < 1e-7, "{rho:?} alpha {alpha} s {s}: {closed} vs {quad}");
                }
            }
        }
    }

    #[test]
    fn lower_moments() {
        let rho = RadialModulator::Exponential { rate: 1.0 };
        let m = rho.lower_moment(0.1, 1.5, 2.0);
        let q = integrate(
            |r: f64| r.powf(1.0 - 1.5) * (-r).exp(),
            0.0,
            0.1,
            QuadOptions::new(1e-14, 1e-12),
        )
        .unwrap();
        assert!((m - q.value).abs() < 1e-10);
        let c = RadialModulator::Constant(2.0).lower_moment(0.1, 1.5, 4.0);
        assert!((c - 2.0 * 0.1f64.powf(2.5) / 2.5).abs() < 1e-15);
    }

    #[test]
    fn sandwich_holds_pointwise() {
        for rho in [
            RadialModulator::Constant(0.4),
            RadialModulator::Exponential { rate: 2.0 },
            RadialModulator::Indicator {
                level: 3.0,
                radius: 0.5,
            },
        ] {
            let s = rho.sandwich();
            for i in 0..2000 {
                let r = i as f64 * 0.005;
                let ind = if r <= s.c { 1.0 } else { 0.0 };
                let mid = s.c1 * rho.value(r);
                assert!(ind <= mid + 1e-12 && mid <= s.c2 + 1e-12, "{rho:?} r {r}");
            }
        }
    }
}
