//! Integrability gates on `(alpha, d, p, q)`.

/// Outcome of [`admissible_pq`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Admissibility {
    pub admissible: bool,
    /// Open interval of exponents `gamma` satisfying both conditions.
    pub gamma_window: Option<(f64, f64)>,
}

/// Is there `gamma in (1, alpha)` with `p > d / (gamma - 1)` and
/// `q > alpha / (alpha - gamma)`? Eliminating `gamma`, the window is
/// `(1 + d/p, alpha - alpha/q)`; infinite `p` or `q` are allowed.
pub fn admissible_pq(alpha: f64, d: usize, p: f64, q: f64) -> Admissibility {
    let lo = 1.0 + d as f64 / p;
    let hi = alpha - alpha / q;
    if lo < hi {
        Admissibility {
            admissible: true,
            gamma_window: Some((lo, hi)),
        }
    } else {
        Admissibility {
            admissible: false,
            gamma_window: None,
        }
    }
}

/// `p > d / (alpha - 1)` and `q > p alpha / (p (alpha - 1) - d)`.
pub fn krylov_pq_check(alpha: f64, d: usize, p: f64, q: f64) -> bool {
    krylov_pq_violation(alpha, d, p, q).is_none()
}

/// Names the first failed inequality of [`krylov_pq_check`], if any.
pub fn krylov_pq_violation(alpha: f64, d: usize, p: f64, q: f64) -> Option<String> {
    let d = d as f64;
    let p_floor = d / (alpha - 1.0);
    if !(p > p_floor) {
        return Some(format!("p > d/(alpha-1) fails: p = {p}, d/(alpha-1) = {p_floor}"));
    }
    let q_floor = if p.is_infinite() {
        alpha / (alpha - 1.0)
    } else {
        p * alpha / (p * (alpha - 1.0) - d)
    };
    if !(q > q_floor) {
        return Some(format!(
            "q > p alpha/(p(alpha-1)-d) fails: q = {q}, bound = {q_floor}"
        ));
    }
    None
}
