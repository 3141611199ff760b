use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use levymv::kernel::MixedNormSpec;
use levymv::levy_model::LevyModel;
use levymv::measure::EmpiricalMeasure;
use levymv::numerics::{integrate, ks_two_sample, QuadOptions};
use levymv::sampler::IncrementStream;
use levymv::solver::{
    check_envelope, check_lipschitz, drift_integrability_report, fixed_point_residual,
    mollify_drift, picard_iterate, solve_frozen, DriftField, DriftSpec, MeasureFn, PicardStatus,
    PointFn, SolverConfig,
};
use levymv::Error;

fn normal_cloud(dim: usize, n: usize, mean: f64, sd: f64, seed: u64) -> EmpiricalMeasure {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = (0..n * dim)
        .map(|_| mean + sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    EmpiricalMeasure::uniform(dim, pts).unwrap()
}

fn zeros(dim: usize, n: usize) -> EmpiricalMeasure {
    EmpiricalMeasure::uniform(dim, vec![0.0; dim * n]).unwrap()
}

fn mean_and_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0))
}

#[test]
fn ornstein_uhlenbeck_variance() {
    let model = LevyModel::brownian(1);
    let drift = DriftSpec::linear(DMatrix::from_element(1, 1, -1.0), vec![0.0]).unwrap();
    let n = 100_000;
    let cfg = SolverConfig::new(1.0, n, 11);
    let ens = solve_frozen(&model, &drift, None, &zeros(1, n), &cfg).unwrap();
    for (k, t) in ens.times.iter().enumerate().filter(|(k, _)| k % 128 == 0 && *k > 0) {
        let (_, var) = mean_and_var(ens.measures[k].particles());
        let exact = (1.0 - (-2.0 * t).exp()) / 2.0;
        let slack = 3.0 * var * (2.0 / n as f64).sqrt() + cfg.step();
        assert!((var - exact).abs() < slack, "t {t}: {var} vs {exact}");
    }
}

#[test]
fn drift_free_law_matches_direct_sampling() {
    let model = LevyModel::isotropic_stable(2, 1.5).unwrap();
    let n = 100_000;
    let init = normal_cloud(2, n, 0.5, 0.3, 1);
    let cfg = SolverConfig::new(1.0, n, 2).with_dt(1.0 / 64.0);
    let ens = solve_frozen(&model, &DriftSpec::zero(2), None, &init, &cfg).unwrap();
    let other = normal_cloud(2, n, 0.5, 0.3, 3);
    let mut s = IncrementStream::new(&model, 4, 0).unwrap();
    let direct: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let l = s.sample_increment(1.0).unwrap();
            vec![other.particle(i)[0] + l[0], other.particle(i)[1] + l[1]]
        })
        .collect();
    for a in 0..2 {
        let sim = ens.terminal().axis(a);
        let dir: Vec<f64> = direct.iter().map(|r| r[a]).collect();
        let ks = ks_two_sample(&sim, &dir);
        assert!(ks.passes(0.01), "axis {a}: {ks:?}");
    }
}

#[test]
fn ensembles_do_not_depend_on_worker_count() {
    let model = LevyModel::isotropic_stable(1, 1.5).unwrap();
    let drift = DriftSpec::mean_reverting(1, 1.0).unwrap();
    let init = normal_cloud(1, 500, 0.0, 1.0, 5);
    let cfg = SolverConfig::new(0.5, 500, 9).with_dt(0.01);
    let curve = vec![init.clone(); cfg.steps() + 1];
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| solve_frozen(&model, &drift, Some(&curve), &init, &cfg).unwrap())
    };
    let a = run(1);
    let b = run(4);
    let c = run(4);
    assert_eq!(a, b);
    assert_eq!(b, c);
}

#[test]
fn euler_scheme_has_weak_order_one() {
    // smooth mean-reverting drift with a nonlinear correction
    let f: PointFn = Arc::new(|_t, x: &[f64], out: &mut [f64]| out[0] = -x[0] + 0.5 * x[0].sin());
    let drift = DriftSpec::new(DriftField::MeasureFree { dim: 1, f }, 0.0, None, Some(1.5)).unwrap();
    let model = LevyModel::brownian(1);
    let n = 1_000_000;
    let init = EmpiricalMeasure::uniform(1, vec![1.0; n]).unwrap();
    let panel: [fn(f64) -> f64; 3] = [|x| x, |x| x * x, |x| x.cos()];
    let expectations: Vec<Vec<(f64, f64)>> = [0.2, 0.1, 0.05]
        .iter()
        .map(|&dt| {
            let cfg = SolverConfig::new(1.0, n, 77).with_dt(dt);
            let ens = solve_frozen(&model, &drift, None, &init, &cfg).unwrap();
            let xs = ens.terminal().particles();
            panel
                .iter()
                .map(|g| {
                    let v: Vec<f64> = xs.iter().map(|x| g(*x)).collect();
                    let (m, var) = mean_and_var(&v);
                    (m, (var / n as f64).sqrt())
                })
                .collect()
        })
        .collect();
    for j in 0..panel.len() {
        let (e0, s0) = expectations[0][j];
        let (e1, s1) = expectations[1][j];
        let (e2, s2) = expectations[2][j];
        let d1 = e0 - e1;
        let d2 = e1 - e2;
        let noise1 = 3.0 * (s0 * s0 + s1 * s1).sqrt();
        let noise2 = 3.0 * (s1 * s1 + s2 * s2).sqrt();
        // halving dt halves the difference, up to Monte Carlo noise
        assert!(
            (d1 - 2.0 * d2).abs() <= 0.25 * d1.abs() + noise1 + 2.0 * noise2,
            "g{j}: differences {d1} and {d2}"
        );
        assert!(d1.abs() > 2.0 * noise1, "g{j}: difference {d1} is not resolved");
    }
}

#[test]
fn measure_free_drift_converges_at_first_iterate() {
    let model = LevyModel::brownian(1);
    let drift = DriftSpec::linear(DMatrix::from_element(1, 1, -0.5), vec![0.2]).unwrap();
    let init = normal_cloud(1, 2000, 0.0, 1.0, 7);
    let cfg = SolverConfig::new(1.0, 2000, 8).with_dt(1.0 / 128.0);
    let state = picard_iterate(&model, &drift, &init, &cfg, 1e-9, 5).unwrap();
    assert_eq!(state.status, PicardStatus::Converged { iteration: 1 });
    assert_eq!(state.gaps[1], 0.0);
    assert_eq!(state.contraction_estimate, Some(0.0));
}

#[test]
fn mean_field_picard_contracts_and_conserves_mean() {
    for model in [LevyModel::brownian(1), LevyModel::isotropic_stable(1, 1.5).unwrap()] {
        let drift = DriftSpec::mean_reverting(1, 1.0).unwrap();
        let n = 10_000;
        let m = 0.7;
        let init = normal_cloud(1, n, m, 1.0, 21);
        let cfg = SolverConfig::new(1.0, n, 22);
        let tol = 1e-3;
        let state = picard_iterate(&model, &drift, &init, &cfg, tol, 10).unwrap();
        assert!(state.converged(), "{:?} {:?}", state.status, state.gaps);
        assert!(state.final_gap() < 1e-2);
        let eps = state.contraction_estimate.unwrap();
        assert!(eps < 1.0, "epsilon {eps}");
        for (n_iter, gap) in state.gaps.iter().enumerate().skip(1) {
            // gaps[i] compares X^(i+1) with X^(i)
            assert!(*gap <= eps.powi(n_iter as i32) * state.gaps[0] * 1.5, "{:?}", state.gaps);
        }
        let m0 = init.mean()[0];
        for (k, mu) in state.ensemble.measures.iter().enumerate() {
            let (mean, var) = mean_and_var(mu.particles());
            let se = (var / n as f64).sqrt();
            assert!((mean - m0).abs() <= 3.0 * se, "node {k}: {mean} vs {m0} (se {se})");
        }
        let lo = state.theta_moments.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = state.theta_moments.iter().cloned().fold(0.0, f64::max);
        assert!(hi.is_finite() && hi < 1.5 * lo);
        let t0 = state.window.unwrap();
        assert!(t0 > 0.0 && t0 <= cfg.horizon);
        let residual = fixed_point_residual(&model, &drift, &state, &init, &cfg).unwrap();
        assert!(residual <= 2.0 * tol, "residual {residual}");
    }
}

#[test]
fn picard_gaps_are_monotone_under_common_noise() {
    let model = LevyModel::isotropic_stable(1, 1.5).unwrap();
    // Lipschitz mean-field drift with a nonlinear spatial part
    let f: MeasureFn = Arc::new(|_t, x: &[f64], mu: &EmpiricalMeasure, out: &mut [f64]| {
        let m = mu.mean()[0];
        out[0] = -(x[0] - m) + 0.3 * (x[0] + m).sin();
    });
    let drift = DriftSpec::new(DriftField::Opaque { dim: 1, f }, 0.0, None, Some(1.6)).unwrap();
    let mut monotone = 0;
    for seed in 0..20 {
        let init = normal_cloud(1, 400, 0.0, 1.0, 100 + seed);
        let cfg = SolverConfig::new(1.0, 400, seed).with_dt(1.0 / 64.0);
        let state = picard_iterate(&model, &drift, &init, &cfg, 1e-12, 7).unwrap();
        if state.gaps.windows(2).skip(1).all(|w| w[1] <= w[0]) {
            monotone += 1;
        }
    }
    assert!(monotone >= 19, "{monotone} of 20 runs monotone");
}

#[test]
fn picard_requires_a_lipschitz_drift() {
    let model = LevyModel::brownian(1);
    let drift = DriftSpec::sign(1, 1.0).unwrap();
    let init = zeros(1, 10);
    let cfg = SolverConfig::new(1.0, 10, 0);
    assert!(matches!(
        picard_iterate(&model, &drift, &init, &cfg, 1e-3, 3),
        Err(Error::Argument(_))
    ));
}

#[test]
fn raw_singular_drift_is_never_time_stepped() {
    let model = LevyModel::brownian(1);
    let spec = MixedNormSpec::new(1.5, 8.0, (0.0, 1.0)).unwrap();
    let drift = DriftSpec::power_singular(1, 0.5, 1.0, spec).unwrap();
    let cfg = SolverConfig::new(1.0, 10, 0);
    assert!(matches!(
        solve_frozen(&model, &drift, None, &zeros(1, 10), &cfg),
        Err(Error::Unsupported(_))
    ));
}

#[test]
fn theta_must_lie_below_alpha() {
    let model = LevyModel::isotropic_stable(1, 1.5).unwrap();
    let init = zeros(1, 10);
    for theta in [0.5, 1.5, 2.0] {
        let cfg = SolverConfig::new(1.0, 10, 0).with_theta(theta);
        assert!(solve_frozen(&model, &DriftSpec::zero(1), None, &init, &cfg).is_err());
    }
}

#[test]
fn non_finite_drift_names_its_location() {
    let f: PointFn = Arc::new(|_t, x: &[f64], out: &mut [f64]| out[0] = 1.0 / (x[0] - 0.25));
    let drift = DriftSpec::new(DriftField::MeasureFree { dim: 1, f }, 0.0, None, None).unwrap();
    let init = EmpiricalMeasure::uniform(1, vec![0.25, 0.0]).unwrap();
    let cfg = SolverConfig::new(1.0, 2, 0);
    match solve_frozen(&LevyModel::brownian(1), &drift, None, &init, &cfg) {
        Err(Error::Numerical { message, .. }) => assert!(message.contains("t = 0"), "{message}"),
        other => panic!("{other:?}"),
    }
}

fn mollified_sign_oracle(x: f64, n: usize) -> f64 {
    // int sign(x - y) phi_{1/n}(y) dy, split at the jump
    let s = 1.0 / n as f64;
    let phi = |y: f64| (-0.5 * (y / s).powi(2)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
    let lo = -40.0 * s;
    let hi = 40.0 * s;
    let opts = QuadOptions::new(1e-13, 1e-13);
    let mut total = 0.0;
    if x > lo {
        // y < x gives sign +1
        total += integrate(phi, lo, x.min(hi), opts).unwrap().value;
    }
    if x < hi {
        total -= integrate(phi, x.max(lo), hi, opts).unwrap().value;
    }
    total
}

#[test]
fn mollified_sign_matches_the_gaussian_convolution() {
    let base = DriftSpec::sign(1, 1.0).unwrap();
    let mu = zeros(1, 1);
    let mut moduli = Vec::new();
    for n in [2, 4, 8, 16, 32] {
        let bn = mollify_drift(&base, n).unwrap();
        for i in 0..=400 {
            let x = -2.0 + i as f64 * 0.01;
            let v = bn.field.evaluate(0.3, &[x], &mu)[0];
            let exact = mollified_sign_oracle(x, n);
            assert!((v - exact).abs() < 1e-8, "n {n}, x {x}: {v} vs {exact}");
        }
        let env = check_envelope(&bn, 1.0, 10_000, n as u64).unwrap();
        assert!(env.passes(), "{env:?}");
        assert_eq!(bn.bounded_part, 1.0);
        let lip = check_lipschitz(&bn, 1.0, 4000, 99).unwrap();
        assert!(lip.passes(), "{lip:?}");
        moduli.push(bn.lipschitz.unwrap());
    }
    assert!(moduli.windows(2).all(|w| w[1] > w[0]), "{moduli:?}");
    // b^n -> sign away from the jump
    let b = mollify_drift(&base, 400).unwrap();
    for x in [-1.0, -0.1, 0.1, 0.5] {
        assert!((b.field.evaluate(0.0, &[x], &mu)[0] - f64::signum(x)).abs() < 1e-12);
    }
}

#[test]
fn smooth_bounded_drift_is_nearly_unchanged() {
    let f: PointFn = Arc::new(|_t, x: &[f64], out: &mut [f64]| {
        out[0] = x[0].sin();
        out[1] = (x[0] * x[1]).cos();
    });
    let base = DriftSpec::new(DriftField::MeasureFree { dim: 2, f: f.clone() }, 2f64.sqrt(), None, Some(5.0)).unwrap();
    let mu = zeros(2, 1);
    let mut errors = Vec::new();
    for n in [8, 16, 32] {
        let bn = mollify_drift(&base, n).unwrap();
        let mut worst = 0.0f64;
        for i in 0..20 {
            let x = [-1.0 + 0.1 * i as f64, 0.5 - 0.05 * i as f64];
            let v = bn.field.evaluate(0.0, &x, &mu);
            let mut exact = [0.0; 2];
            f(0.0, &x, &mut exact);
            worst = worst.max((v[0] - exact[0]).abs().max((v[1] - exact[1]).abs()));
        }
        assert!(worst < 2.0 / n as f64, "n {n}: {worst}");
        errors.push(worst);
    }
    assert!(errors.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn mollified_convolution_drift_tracks_the_base() {
    // beta(x, kbar) = tanh(kbar - x), K(x, y) = y
    let base = DriftSpec::new(
        DriftField::Convolution {
            dim: 1,
            kernel_dim: 1,
            kernel: Arc::new(|_x, y: &[f64], out: &mut [f64]| out[0] = y[0]),
            outer: Arc::new(|_t, x: &[f64], k: &[f64], out: &mut [f64]| out[0] = (k[0] - x[0]).tanh()),
        },
        1.0,
        None,
        None,
    )
    .unwrap();
    let mu = normal_cloud(1, 16, 0.3, 1.0, 4);
    let bn = mollify_drift(&base, 64).unwrap();
    for x in [-1.0, 0.0, 0.4, 2.0] {
        let a = bn.field.evaluate(0.0, &[x], &mu)[0];
        let b = base.field.evaluate(0.0, &[x], &mu)[0];
        assert!((a - b).abs() < 1e-3, "x {x}: {a} vs {b}");
    }
    assert!(check_envelope(&bn, 1.0, 2000, 1).unwrap().passes());
    assert!(bn.lipschitz.unwrap().is_finite());
}

#[test]
fn opaque_measure_dependence_cannot_be_mollified() {
    let f: MeasureFn = Arc::new(|_t, x: &[f64], mu: &EmpiricalMeasure, out: &mut [f64]| {
        out[0] = x[0] * mu.std_dev()[0];
    });
    let base = DriftSpec::new(DriftField::Opaque { dim: 1, f }, 0.0, None, None).unwrap();
    assert!(matches!(mollify_drift(&base, 4), Err(Error::Unsupported(_))));
}

fn power_singular_oracle(x: f64, n: usize) -> f64 {
    // int_{-1}^{1} |u|^{-1/2} phi(x - u) du with u = v^2 on each half-line
    let s = 1.0 / n as f64;
    let phi = |y: f64| (-0.5 * (y / s).powi(2)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
    let g = |v: f64| 2.0 * (phi(x - v * v) + phi(x + v * v));
    let opts = QuadOptions::new(1e-12, 1e-12);
    let mut cuts = vec![0.0, 1.0];
    if x.abs() < 1.0 {
        cuts.insert(1, x.abs().sqrt());
    }
    cuts.windows(2)
        .map(|w| integrate(g, w[0], w[1], opts).unwrap().value)
        .sum()
}

#[test]
fn mollified_singular_drift_keeps_its_envelope() {
    let spec = MixedNormSpec::new(1.5, 8.0, (0.0, 1.0)).unwrap();
    let base = DriftSpec::power_singular(1, 0.5, 1.0, spec).unwrap();
    let mu = zeros(1, 1);
    let mut factors = Vec::new();
    for n in [4, 16, 64] {
        let bn = mollify_drift(&base, n).unwrap();
        for x in [-1.3, -0.7, -0.05, 0.0, 0.2, 0.99, 1.02] {
            let v = bn.field.evaluate(0.0, &[x], &mu)[0];
            let exact = power_singular_oracle(x, n);
            assert!((v - exact).abs() < 1e-4 * exact.max(1.0), "n {n}, x {x}: {v} vs {exact}");
        }
        let env = check_envelope(&bn, 1.0, 10_000, 3).unwrap();
        assert!(env.passes(), "{env:?}");
        // the smoothed edge at |x| = 1 is absorbed into K
        assert!(bn.bounded_part > 0.0 && bn.bounded_part < 1.0, "n {n}: K = {}", bn.bounded_part);
        factors.push(bn.envelope_value(0.0, &[0.5]) - bn.bounded_part);
    }
    // the factor on G is scale free, so it does not grow with n
    let g = 0.5f64.powf(-0.5);
    assert!(factors.iter().all(|f| *f >= g && *f < 2.0 * g), "{factors:?}");
    assert!((factors[2] - factors[0]).abs() < 0.05 * g, "{factors:?}");
}

#[test]
fn integrability_report_examples() {
    let model = LevyModel::brownian(1);
    let n = 20_000;
    let init = normal_cloud(1, n, 0.0, 0.5, 1);
    let cfg = SolverConfig::new(1.0, n, 2).with_dt(1.0 / 128.0);

    let zero = DriftSpec::zero(1);
    let ens = solve_frozen(&model, &zero, None, &init, &cfg).unwrap();
    let r = drift_integrability_report(&[zero], &[ens.clone()], 2.0).unwrap();
    assert_eq!(r.value, 0.0);

    let sign = mollify_drift(&DriftSpec::sign(1, 0.8).unwrap(), 8).unwrap();
    let ens = solve_frozen(&model, &sign, None, &init, &cfg).unwrap();
    let r = drift_integrability_report(&[sign], &[ens], 1.5).unwrap();
    assert!(r.value <= 0.8f64.powf(1.5) * cfg.horizon);

    let spec = MixedNormSpec::new(1.5, 8.0, (0.0, 1.0)).unwrap();
    let base = DriftSpec::power_singular(1, 0.5, 1.0, spec).unwrap();
    let drifts: Vec<DriftSpec> = [2, 4, 8, 16].iter().map(|&k| mollify_drift(&base, k).unwrap()).collect();
    let ensembles: Vec<_> = drifts
        .iter()
        .map(|d| solve_frozen(&model, d, None, &init, &cfg).unwrap())
        .collect();
    let r = drift_integrability_report(&drifts, &ensembles, 1.2).unwrap();
    assert!(!r.growing);
    let lo = r.values.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(r.value.is_finite() && r.value < 1.25 * lo, "{:?}", r.values);
}
