use std::f64::consts::PI;

use levymv::kernel::{
    bessel_norm, bump_panel, critical_profile, gaussian_bump, gradient_bound_probe, heat_kernel,
    mixed_norm, semigroup_apply, smooth_bump, smoothing_probe, strong_continuity_probe,
    BesselNormSpec, GridFunction, GridSpec, MixedNormSpec,
};
use levymv::levy_model::LevyModel;
use levymv::numerics::{integrate, QuadOptions};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn geomspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| a * (b / a).powf(i as f64 / (n - 1) as f64))
        .collect()
}

fn stable() -> LevyModel {
    LevyModel::isotropic_stable(1, 1.5).unwrap()
}

/// `(1/pi) int_0^inf exp(-xi^alpha) dxi`, via `xi = u/(1-u)`.
fn stable_origin_oracle(alpha: f64) -> f64 {
    let q = integrate(
        |u: f64| {
            if u >= 1.0 {
                return 0.0;
            }
            let xi = u / (1.0 - u);
            (-xi.powf(alpha)).exp() / ((1.0 - u) * (1.0 - u))
        },
        0.0,
        1.0,
        QuadOptions::new(1e-14, 1e-12),
    )
    .unwrap();
    q.value / PI
}

#[test]
fn stable_density_at_origin_matches_quadrature() {
    let g = GridSpec::cube(1, 256.0, 1 << 13).unwrap();
    let p = heat_kernel(&stable(), 1.0, &g).unwrap();
    let at0 = p.values()[g.resolution()[0] / 2];
    assert!((at0 - stable_origin_oracle(1.5)).abs() < 1e-6, "{at0}");
    assert!((p.integral() - 1.0).abs() < 1e-6);
    assert!(p.values().iter().all(|v| *v >= -1e-8));
}

#[test]
fn kernels_integrate_to_one() {
    let models = vec![
        (LevyModel::brownian(2), GridSpec::cube(2, 12.0, 128).unwrap()),
        (LevyModel::isotropic_stable(2, 1.5).unwrap(), GridSpec::cube(2, 40.0, 256).unwrap()),
        (LevyModel::cylindrical_stable(2, 1.5).unwrap(), GridSpec::cube(2, 40.0, 256).unwrap()),
        (LevyModel::tempered_stable(1, 1.5, 1.0).unwrap(), GridSpec::cube(1, 40.0, 2048).unwrap()),
        (LevyModel::truncated_stable(1, 1.5, 1.0).unwrap(), GridSpec::cube(1, 40.0, 2048).unwrap()),
    ];
    for (m, g) in models {
        let p = heat_kernel(&m, 1.0, &g).unwrap();
        assert!((p.integral() - 1.0).abs() < 1e-6);
        assert!(p.values().iter().all(|v| *v >= -1e-8), "negative kernel");
    }
}

#[test]
fn brownian_semigroup_on_gaussian() {
    let g = GridSpec::cube(1, 16.0, 1024).unwrap();
    let s = 0.3f64;
    let f = gaussian_bump(&g, &[0.0], s.sqrt()).unwrap();
    let t = 0.5;
    let u = semigroup_apply(&LevyModel::brownian(1), t, &f).unwrap();
    let v = s + t;
    let expected = GridFunction::from_fn(g, |x| (s / v).sqrt() * (-0.5 * x[0] * x[0] / v).exp()).unwrap();
    assert!(u.sub(&expected).unwrap().max_abs() < 1e-6);
    assert_eq!(semigroup_apply(&stable(), 0.0, &f).unwrap(), f);
    let one = GridFunction::constant(f.grid().clone(), 1.0).unwrap();
    let p1 = semigroup_apply(&stable(), 0.7, &one).unwrap();
    assert!(p1.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
}

#[test]
fn semigroup_property_and_contraction() {
    let g = GridSpec::cube(1, 10.0, 512).unwrap();
    let m = stable();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let t: f64 = rng.random_range(0.01..1.0);
        let s: f64 = rng.random_range(0.01..1.0);
        let c: f64 = rng.random_range(-3.0..3.0);
        let w: f64 = rng.random_range(0.2..1.5);
        let f = gaussian_bump(&g, &[c], w).unwrap();
        let a = semigroup_apply(&m, t + s, &f).unwrap();
        let b = semigroup_apply(&m, t, &semigroup_apply(&m, s, &f).unwrap()).unwrap();
        assert!(a.sub(&b).unwrap().max_abs() <= 1e-8 * a.max_abs());
        for p in [1.5, 2.0, 4.0] {
            assert!(a.lp_norm(p) <= f.lp_norm(p) * (1.0 + 1e-9));
        }
    }
}

#[test]
fn bessel_norm_two_matches_finite_differences() {
    let n = 1 << 10;
    let g = GridSpec::cube(1, 4.0, n).unwrap();
    let f = smooth_bump(&g, &[0.3], 1.5).unwrap();
    let h = g.spacing(0);
    let v = f.values();
    let fd: Vec<f64> = (0..n)
        .map(|i| {
            let l = v[(i + n - 1) % n];
            let r = v[(i + 1) % n];
            v[i] - (l - 2.0 * v[i] + r) / (h * h)
        })
        .collect();
    let fd = GridFunction::new(g, fd).unwrap();
    for p in [2.0, 3.0] {
        let spectral = bessel_norm(&f, BesselNormSpec::new(2.0, p)).unwrap();
        let oracle = fd.lp_norm(p);
        assert!((spectral / oracle - 1.0).abs() < 0.02, "p {p}: {spectral} vs {oracle}");
    }
}

#[test]
fn bessel_norm_monotone_and_log_convex() {
    let g = GridSpec::cube(1, 6.0, 256).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let f = GridFunction::from_fn(g.clone(), |_| 0.0).unwrap();
        let mut vals = f.into_values();
        for _ in 0..3 {
            let c: f64 = rng.random_range(-3.0..3.0);
            let w: f64 = rng.random_range(0.2..1.0);
            let a: f64 = rng.random_range(-1.0..1.0);
            for (i, v) in vals.iter_mut().enumerate() {
                let x = g.coordinate(0, i);
                *v += a * (-0.5 * (x - c) * (x - c) / (w * w)).exp();
            }
        }
        let f = GridFunction::new(g.clone(), vals).unwrap();
        let b1: f64 = rng.random_range(0.0..2.0);
        let b2: f64 = b1 + rng.random_range(0.0..2.0);
        let n1 = bessel_norm(&f, BesselNormSpec::new(b1, 2.0)).unwrap();
        let n2 = bessel_norm(&f, BesselNormSpec::new(b2, 2.0)).unwrap();
        assert!(n1 <= n2 * (1.0 + 1e-12));
        let theta: f64 = rng.random_range(0.05..0.95);
        let mid = bessel_norm(&f, BesselNormSpec::new(theta * b2, 2.0)).unwrap();
        let n0 = f.lp_norm(2.0);
        assert!(mid <= n0.powf(1.0 - theta) * n2.powf(theta) * (1.0 + 1e-6));
    }
}

#[test]
fn mixed_norm_examples() {
    let g = GridSpec::cube(1, 2.0, 1024).unwrap();
    let boxf = GridFunction::from_fn(g.clone(), |x| if (0.0..1.0).contains(&x[0]) { 1.0 } else { 0.0 }).unwrap();
    let slices = vec![boxf.clone(); 10];
    let v = mixed_norm(&slices, MixedNormSpec::new(2.0, 2.0, (0.0, 1.0)).unwrap()).unwrap();
    assert!((v - 1.0).abs() < 1e-12);
    let f = gaussian_bump(&g, &[0.2], 0.4).unwrap();
    for (p, q) in [(1.5, 3.0), (4.0, 2.0), (2.0, f64::INFINITY)] {
        let slices = vec![f.clone(); 7];
        let t = 2.5;
        let v = mixed_norm(&slices, MixedNormSpec::new(p, q, (0.0, t)).unwrap()).unwrap();
        let expected = if q.is_infinite() { 1.0 } else { t.powf(1.0 / q) } * f.lp_norm(p);
        assert!((v / expected - 1.0).abs() < 1e-12);
    }
    assert!(mixed_norm(&[], MixedNormSpec::new(2.0, 2.0, (0.0, 1.0)).unwrap()).is_err());
}

proptest! {
    #[test]
    fn mixed_norm_is_homogeneous(c in -10.0f64..10.0, w in 0.1f64..1.0, p in 1.0f64..6.0, q in 1.0f64..6.0) {
        let g = GridSpec::cube(1, 2.0, 64).unwrap();
        let f = gaussian_bump(&g, &[0.1], w).unwrap();
        let slices = vec![f.clone(), f.scaled(0.5), f.scaled(2.0)];
        let spec = MixedNormSpec::new(p, q, (0.0, 1.0)).unwrap();
        let a = mixed_norm(&slices, spec).unwrap();
        let scaled: Vec<_> = slices.iter().map(|s| s.scaled(c)).collect();
        let b = mixed_norm(&scaled, spec).unwrap();
        prop_assert!((b - c.abs() * a).abs() <= 1e-12 * b.max(1e-300));
    }
}

fn gradient_setup() -> (GridSpec, Vec<GridFunction>) {
    let g = GridSpec::cube(1, 16.0, 1 << 13).unwrap();
    let panel = bump_panel(&g, &geomspace(0.005, 2.0, 36)).unwrap();
    (g, panel)
}

#[test]
fn gradient_probe_rates() {
    let (_, panel) = gradient_setup();
    let t = geomspace(1e-3, 1e-1, 9);
    for (model, alpha) in [(LevyModel::brownian(1), 2.0), (stable(), 1.5)] {
        for p in [2.0, 4.0] {
            for k in [1usize, 2] {
                let r = gradient_bound_probe(&model, p, &t, &panel, k).unwrap();
                let target = -(k as f64) / alpha;
                assert!(r.passes);
                assert!((r.slope - target).abs() < 0.1, "alpha {alpha} p {p} k {k}: {}", r.slope);
            }
        }
    }
}

#[test]
fn brownian_gradient_slope_is_tight() {
    let (_, panel) = gradient_setup();
    let t = geomspace(1e-3, 1e-1, 9);
    let r = gradient_bound_probe(&LevyModel::brownian(1), 2.0, &t, &panel, 1).unwrap();
    assert!((r.slope + 0.5).abs() < 0.05, "{}", r.slope);
}

#[test]
fn smoothing_probe_rates() {
    let g = GridSpec::cube(1, 20.0, 1 << 16).unwrap();
    let f = critical_profile(&g, 0.0).unwrap();
    let t = geomspace(1e-4, 1e-2, 7);
    let b = smoothing_probe(&LevyModel::brownian(1), 2.0, 1.0, 0.0, &t, &f).unwrap();
    assert!((b.slope + 0.5).abs() < 0.05, "{}", b.slope);
    for gamma in [1.0, 1.2] {
        let r = smoothing_probe(&stable(), 2.0, gamma, 0.0, &t, &f).unwrap();
        assert!(r.passes);
        assert!((r.slope + gamma / 1.5).abs() < 0.1, "gamma {gamma}: {}", r.slope);
    }
    // gamma = 0 only asks for contraction; a smooth f keeps the norm finite
    let smooth = gaussian_bump(&g, &[0.0], 0.5).unwrap();
    let flat = smoothing_probe(&stable(), 2.0, 0.0, 0.0, &t, &smooth).unwrap();
    assert!(flat.slope >= -0.05);
}

#[test]
fn strong_continuity_probe_rates() {
    let g = GridSpec::cube(1, 20.0, 1 << 16).unwrap();
    let t = geomspace(1e-4, 1e-2, 7);
    for theta in [0.5, 1.0] {
        let f = critical_profile(&g, theta).unwrap();
        let b = strong_continuity_probe(&LevyModel::brownian(1), 2.0, theta, &t, &f).unwrap();
        assert!((b.slope - theta / 2.0).abs() < 0.05, "theta {theta}: {}", b.slope);
        let s = strong_continuity_probe(&stable(), 2.0, theta, &t, &f).unwrap();
        assert!(s.passes);
        assert!((s.slope - theta / 1.5).abs() < 0.1, "theta {theta}: {}", s.slope);
    }
    let f = critical_profile(&g, 0.0).unwrap();
    assert!(strong_continuity_probe(&stable(), 2.0, 0.0, &t, &f).unwrap().passes);
}
