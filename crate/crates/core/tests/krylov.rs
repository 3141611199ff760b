use levymv::kernel::{gaussian_bump, GridFunction, GridSpec, SpaceTimeFunction};
use levymv::krylov::{
    krylov_ratio, krylov_sweep, path_integrals, ratios_from, report_csv, shrinking_family,
    standard_panel,
};
use levymv::levy_model::LevyModel;
use levymv::measure::EmpiricalMeasure;
use levymv::solver::{DriftSpec, SolverConfig};
use levymv::Error;

fn origin(n: usize) -> EmpiricalMeasure {
    EmpiricalMeasure::uniform(1, vec![0.0; n]).unwrap()
}

fn grid() -> GridSpec {
    GridSpec::cube(1, 4.0, 1024).unwrap()
}

#[test]
fn indicator_of_the_whole_box_integrates_time() {
    let model = LevyModel::brownian(1);
    let g = GridSpec::cube(1, 16.0, 256).unwrap();
    let one = SpaceTimeFunction::stationary(GridFunction::constant(g, 1.0).unwrap(), (0.0, 1.0)).unwrap();
    let n = 4000;
    let cfg = SolverConfig::new(1.0, n, 3).with_dt(1.0 / 128.0);
    let r = krylov_ratio(&model, &DriftSpec::zero(1), &[one.clone()], 4.0, 8.0, None, &origin(n), &cfg, None)
        .unwrap();
    let e = &r.entries[0];
    assert!((e.lhs - 1.0).abs() < 1e-12, "{}", e.lhs);
    assert_eq!(e.drift_mass, 0.0);
    let norm = 32f64.powf(0.25);
    assert!((e.f_norm - norm).abs() < 1e-12 * norm);
    assert!((e.ratio - 1.0 / norm).abs() < 1e-12);
}

#[test]
fn ratio_is_invariant_under_scaling() {
    let model = LevyModel::isotropic_stable(1, 1.5).unwrap();
    let panel = standard_panel(&grid(), 1.0).unwrap();
    let n = 2000;
    let cfg = SolverConfig::new(1.0, n, 5).with_dt(1.0 / 64.0);
    let drift = DriftSpec::mean_reverting(1, 0.5).unwrap();
    let curve = vec![origin(n); cfg.steps() + 1];
    let base = krylov_ratio(&model, &drift, &panel, 4.0, 8.0, Some(&curve), &origin(n), &cfg, None).unwrap();
    let doubled: Vec<_> = panel.iter().map(|f| f.scaled(4.0)).collect();
    let r4 = krylov_ratio(&model, &drift, &doubled, 4.0, 8.0, Some(&curve), &origin(n), &cfg, None).unwrap();
    let tripled: Vec<_> = panel.iter().map(|f| f.scaled(3.0)).collect();
    let r3 = krylov_ratio(&model, &drift, &tripled, 4.0, 8.0, Some(&curve), &origin(n), &cfg, None).unwrap();
    for ((a, b), c) in base.entries.iter().zip(&r4.entries).zip(&r3.entries) {
        // a power of two commutes with every floating-point step
        assert_eq!(a.ratio, b.ratio);
        assert!((a.ratio - c.ratio).abs() <= 1e-13 * a.ratio);
    }
}

#[test]
fn brownian_occupation_matches_the_gaussian_oracle() {
    let model = LevyModel::brownian(1);
    let g = grid();
    let n = 40_000;
    let cfg = SolverConfig::new(1.0, n, 8).with_dt(1.0 / 256.0);
    let widths = [0.5, 0.25, 0.125];
    let panel: Vec<_> = widths
        .iter()
        .map(|&w| SpaceTimeFunction::stationary(gaussian_bump(&g, &[0.0], w).unwrap(), (0.0, 1.0)).unwrap())
        .collect();
    let r = krylov_ratio(&model, &DriftSpec::zero(1), &panel, 4.0, 8.0, None, &origin(n), &cfg, None).unwrap();
    for (w, e) in widths.iter().zip(&r.entries) {
        // int_0^T int exp(-x^2/2w^2) N(0, t)(dx) dt = int_0^T w / sqrt(w^2 + t) dt
        let oracle = 2.0 * w * ((w * w + 1.0f64).sqrt() - w);
        // Monte Carlo (lhs <= T, so sd <= T) plus trapezoid bias near t = 0
        let slack = 4.0 / (n as f64).sqrt() + 0.5 * cfg.step();
        assert!((e.lhs - oracle).abs() < slack, "w {w}: {} vs {oracle}", e.lhs);
    }
    let first = r.entries[0].ratio;
    assert!(r.entries.iter().all(|e| e.ratio <= 2.0 * first), "{:?}", r.entries);
}

#[test]
fn stopping_at_a_smaller_ball_never_adds_occupation() {
    let model = LevyModel::isotropic_stable(1, 1.5).unwrap();
    let panel = standard_panel(&grid(), 1.0).unwrap();
    let n = 3000;
    let cfg = SolverConfig::new(1.0, n, 13).with_dt(1.0 / 128.0);
    let radii = [0.5, 1.0, 2.0, 100.0];
    let sides: Vec<_> = radii
        .iter()
        .map(|&r| path_integrals(&model, &DriftSpec::zero(1), &panel, None, &origin(n), &cfg, Some(r)).unwrap())
        .collect();
    for pair in sides.windows(2) {
        for (a, b) in pair[0].lhs.iter().zip(&pair[1].lhs) {
            assert!(a <= b, "{a} > {b}");
        }
    }
    let free = path_integrals(&model, &DriftSpec::zero(1), &panel, None, &origin(n), &cfg, None).unwrap();
    assert!(free.lhs.iter().zip(&sides[3].lhs).all(|(a, b)| (a - b).abs() < 0.01 * a));
}

#[test]
fn inadmissible_exponents_raise_gate_errors() {
    let model = LevyModel::isotropic_stable(1, 1.5).unwrap();
    let panel = standard_panel(&grid(), 1.0).unwrap();
    let cfg = SolverConfig::new(1.0, 10, 0);
    // p exactly at d/(alpha - 1) = 2
    for (p, q) in [(2.0, 100.0), (1.5, 2.0), (4.0, 6.0)] {
        match krylov_ratio(&model, &DriftSpec::zero(1), &panel, p, q, None, &origin(10), &cfg, None) {
            Err(Error::Gate(msg)) => assert!(msg.contains("fails"), "{msg}"),
            other => panic!("({p}, {q}): {other:?}"),
        }
    }
    let zero = SpaceTimeFunction::stationary(GridFunction::constant(grid(), 0.0).unwrap(), (0.0, 1.0)).unwrap();
    assert!(matches!(
        krylov_ratio(&model, &DriftSpec::zero(1), &[zero], 4.0, 8.0, None, &origin(10), &cfg, None),
        Err(Error::Argument(_))
    ));
}

#[test]
fn standard_panel_stays_bounded_for_brownian_and_stable() {
    let g = grid();
    let panel = standard_panel(&g, 1.0).unwrap();
    assert_eq!(panel.len(), 20);
    for model in [LevyModel::brownian(1), LevyModel::isotropic_stable(1, 1.5).unwrap()] {
        let n = 20_000;
        let cfg = SolverConfig::new(1.0, n, 17).with_dt(1.0 / 128.0);
        let sides = path_integrals(&model, &DriftSpec::zero(1), &panel, None, &origin(n), &cfg, None).unwrap();
        for (p, q) in [(4.0, 8.0), (8.0, 16.0)] {
            let r = ratios_from(&model, &sides, &panel, p, q).unwrap();
            assert!(r.gate);
            assert!(r.bounded(10.0), "({p}, {q}): max {} median {}", r.panel_max, r.panel_median);
            let csv = report_csv(&r);
            assert_eq!(csv.lines().count(), 21);
            assert!(csv.starts_with("f_id,p,q,gate,lhs,drift_mass,f_norm,ratio\n"));
        }
    }
}

#[test]
fn shrinking_bumps_separate_admissible_from_inadmissible_cells() {
    let model = LevyModel::isotropic_stable(1, 1.5).unwrap();
    let g = grid();
    let widths = [0.5, 0.25, 0.125, 0.0625];
    let family = shrinking_family(&g, &[0.0], &widths, 1.5, 1.0, 256).unwrap();
    let panel = standard_panel(&g, 1.0).unwrap();
    let n = 20_000;
    let cfg = SolverConfig::new(1.0, n, 23).with_dt(1.0 / 256.0);
    let cells = [(4.0, 8.0), (1.5, 2.0), (1.1, 1.1)];
    let rows = krylov_sweep(
        &model,
        &DriftSpec::zero(1),
        &panel,
        &family,
        &widths,
        &cells,
        None,
        &origin(n),
        &cfg,
    )
    .unwrap();
    assert!(rows[0].gate && !rows[1].gate && !rows[2].gate);
    assert!(rows.iter().all(|r| r.panel_max.is_finite()));
    // parabolic scaling predicts ratio ~ w^{alpha - d/p - alpha/q}
    assert!(rows[0].trend > 0.5, "{:?}", rows[0]);
    assert!(rows[2].trend < -0.3, "{:?}", rows[2]);
    // (1.5, 2) sits outside the gate but its predicted exponent is +1/12
    assert!(rows[1].trend > -0.2, "{:?}", rows[1]);
}
