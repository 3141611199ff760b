//! Exact one-dimensional stable variates.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::Exp1;

fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Symmetric stable variate with characteristic function `exp(-|xi|^alpha)`
/// (Chambers–Mallows–Stuck).
pub fn symmetric_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let v = PI * (open_unit(rng) - 0.5);
    let w: f64 = rng.sample(Exp1);
    let num = (alpha * v).sin() / v.cos().powf(1.0 / alpha);
    num * ((v * (1.0 - alpha)).cos() / w).powf((1.0 - alpha) / alpha)
}

/// Positive stable variate with Laplace transform `exp(-s^a)`, `0 < a < 1`
/// (Kanter's representation).
pub fn positive_stable<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    let u = PI * open_unit(rng);
    let e: f64 = rng.sample(Exp1);
    let ratio = (a * u).sin().powf(a / (1.0 - a)) * ((1.0 - a) * u).sin()
        / u.sin().powf(1.0 / (1.0 - a));
    (ratio / e).powf((1.0 - a) / a)
}


#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cms_matches_characteristic_function() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 400_000;
        let xs: Vec<f64> = (0..n).map(|_| symmetric_stable(1.5, &mut rng)).collect();
        for xi in [0.5f64, 1.0, 2.0] {
            let ecf = xs.iter().map(|x| (xi * x).cos()).sum::<f64>() / n as f64;
            let exact = (-xi.powf(1.5)).exp();
            assert!((ecf - exact).abs() < 4.0 / (n as f64).sqrt(), "xi {xi}: {ecf} vs {exact}");
        }
    }

    #[test]
    fn kanter_matches_laplace_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 400_000;
        let a = 0.75;
        let xs: Vec<f64> = (0..n).map(|_| positive_stable(a, &mut rng)).collect();
        assert!(xs.iter().all(|x| *x > 0.0 && x.is_finite()));
        for s in [0.5f64, 1.0, 2.0] {
            let lt = xs.iter().map(|x| (-s * x).exp()).sum::<f64>() / n as f64;
            assert!((lt - (-s.powf(a)).exp()).abs() < 4.0 / (n as f64).sqrt());
        }
    }
}
