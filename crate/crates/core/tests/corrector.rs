use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sthomog::corrector::*;
use sthomog::environment::presets;
use sthomog::krylov::LinearOperator;
use sthomog::trig::TrigField;
use sthomog::{Environment, EnvironmentSpec, ScalingExponents};

const SQRT3: f64 = 1.732_050_807_568_877_2;

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>() - 0.5).collect()
}

fn env(spec: EnvironmentSpec) -> Environment {
    Environment::build(spec, None).unwrap()
}

fn grid_for(d: usize) -> TorusGrid {
    if d == 1 {
        TorusGrid::new(8, vec![24])
    } else {
        TorusGrid::new(4, vec![12, 10])
    }
}

#[test]
fn grid_checks() {
    let e = env(presets::sine_medium());
    let err = TorusGrid::new(4, vec![2]).check(&e).unwrap_err();
    assert_eq!(err.kind(), "GridTooCoarse");
    let err = TorusGrid::new(4, vec![8, 8]).check(&e).unwrap_err();
    assert_eq!(err.kind(), "DimensionMismatch");
    let err = TorusGrid::new(4, vec![]).check(&e).unwrap_err();
    assert_eq!(err.kind(), "UnsupportedDimension");
    let err = TorusGrid::new(2, vec![16])
        .check(&env(presets::traveling_wave()))
        .unwrap_err();
    assert_eq!(err.kind(), "GridTooCoarse");
}

#[test]
fn node_weights_are_normalized() {
    for seed in 0..10 {
        for d in [1, 2] {
            let e = env(presets::random_admissible(d, seed));
            let m = DiscreteMedium::new(&e, &grid_for(d));
            let ones = vec![1.0; grid_for(d).len()];
            assert_abs_diff_eq!(m.mean(&ones), 1.0, epsilon = 1e-12);
        }
    }
}

#[test]
fn constant_field_sees_only_lambda() {
    let e = env(presets::constant(1.3));
    let g = TorusGrid::new(4, vec![8]);
    let m = DiscreteMedium::new(&e, &g);
    let op = ResolventOperator {
        medium: &m,
        lambda: 1.0,
        theta: 0.0,
        delta: 0.0,
        pin_mean: false,
    };
    let mut y = vec![0.0; g.len()];
    op.apply(&vec![1.0; g.len()], &mut y);
    assert!(y.iter().all(|v| (v - 1.0).abs() < 1e-14));
}

#[test]
fn zero_rhs_gives_zero() {
    let e = env(presets::sine_medium());
    let g = TorusGrid::new(4, vec![16]);
    let m = DiscreteMedium::new(&e, &g);
    let op = ResolventOperator {
        medium: &m,
        lambda: 0.5,
        theta: 1.0,
        delta: 0.0,
        pin_mean: false,
    };
    let (u, _) = solve_resolvent(&op, &vec![0.0; g.len()], None, &SolveOptions::default()).unwrap();
    assert!(u.iter().all(|v| *v == 0.0));
}

#[test]
fn discrete_laplacian_eigenvector() {
    let kappa = 0.8;
    let lambda = 0.3;
    for g in [TorusGrid::new(3, vec![20]), TorusGrid::new(3, vec![20, 6])] {
        let d = g.dimension();
        let mut spec = EnvironmentSpec::isotropic(d, kappa);
        spec.constants.k = 1.0;
        let e = env(spec);
        let m = DiscreteMedium::new(&e, &g);
        let op = ResolventOperator {
            medium: &m,
            lambda,
            theta: 0.7,
            delta: 0.0,
            pin_mean: false,
        };
        let rhs = DiscreteField::sample(&g, |_, x| (std::f64::consts::TAU * x[0]).cos());
        let (u, _) = solve_resolvent(
            &op,
            &rhs.values,
            None,
            &SolveOptions {
                tol: 1e-13,
                ..Default::default()
            },
        )
        .unwrap();
        let dx = g.dx(0);
        let symbol = 2.0 * kappa * (std::f64::consts::PI * dx).sin().powi(2) / (dx * dx);
        for (ui, ri) in u.iter().zip(&rhs.values) {
            assert_abs_diff_eq!(*ui, ri / (lambda + symbol), epsilon = 1e-10);
        }
    }
}

#[test]
fn energy_identity() {
    let e = env(presets::random_admissible(1, 4));
    let g = TorusGrid::new(8, vec![32]);
    let m = DiscreteMedium::new(&e, &g);
    let op = ResolventOperator {
        medium: &m,
        lambda: 0.2,
        theta: 1.0,
        delta: 0.0,
        pin_mean: false,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let rhs = random_vec(&mut rng, g.len());
    let (u, _) = solve_resolvent(
        &op,
        &rhs,
        None,
        &SolveOptions {
            tol: 1e-13,
            ..Default::default()
        },
    )
    .unwrap();
    let lhs = 0.2 * m.inner(&u, &u) + m.energy(&u);
    assert_abs_diff_eq!(lhs, m.inner(&rhs, &u), epsilon = 1e-10 * lhs.abs().max(1.0));
}

#[test]
fn one_dimensional_solvers_reproduce_harmonic_mean() {
    let e = env(presets::sine_medium());
    let g = TorusGrid::new(8, vec![256]);
    let opts = SolveOptions::default();
    let cont = lambda_continuation(&e, &g, ScalingExponents::critical(), &default_schedule(), &opts).unwrap();
    let eff = effective_coefficients(&e, &cont);
    assert_abs_diff_eq!(eff.a[0], SQRT3, epsilon = 1e-3);
    assert_abs_diff_eq!(eff.c[0], 0.0, epsilon = 1e-12);
    assert_abs_diff_eq!(eff.u, 0.0, epsilon = 1e-12);
    for sol in [
        slice_elliptic_limit(&e, &g, &opts).unwrap(),
        time_averaged_limit(&e, &g, &opts).unwrap(),
    ] {
        assert_abs_diff_eq!(effective_coefficients(&e, &sol).a[0], SQRT3, epsilon = 1e-3);
    }
}

#[test]
fn constant_medium_has_trivial_correctors() {
    let mut spec = EnvironmentSpec::isotropic(2, 1.0);
    spec.d = TrigField::constant(0.4);
    let e = env(spec);
    let g = TorusGrid::new(4, vec![8, 8]);
    let sol = lambda_continuation(
        &e,
        &g,
        ScalingExponents::critical(),
        &[0.5, 0.25],
        &SolveOptions::default(),
    )
    .unwrap();
    assert!(sol.xi.iter().flatten().all(|v| *v == 0.0));
    let eff = effective_coefficients(&e, &sol);
    for (a, want) in eff.a.iter().zip([1.0, 0.0, 0.0, 1.0]) {
        assert_abs_diff_eq!(*a, want, epsilon = 1e-14);
    }
    assert_eq!(eff.c, vec![0.0, 0.0]);
    assert_abs_diff_eq!(eff.u, 0.4, epsilon = 1e-14);
}

#[test]
fn cross_solver_agreement_on_moving_medium() {
    let e = env(presets::traveling_wave());
    let g = TorusGrid::new(32, vec![128]);
    let opts = SolveOptions::default();
    let sub = ScalingExponents::new(0.5, 1.0).unwrap();
    let a_cont = effective_coefficients(
        &e,
        &lambda_continuation(&e, &g, sub, &default_schedule(), &opts).unwrap(),
    )
    .a[0];
    let a_slice = effective_coefficients(&e, &slice_elliptic_limit(&e, &g, &opts).unwrap()).a[0];
    assert!((a_cont - a_slice).abs() < 1e-3, "{a_cont} vs {a_slice}");
    let sup = ScalingExponents::new(6.0, 1.0).unwrap();
    let a_cont = effective_coefficients(
        &e,
        &lambda_continuation(&e, &g, sup, &default_schedule(), &opts).unwrap(),
    )
    .a[0];
    let a_avg = effective_coefficients(&e, &time_averaged_limit(&e, &g, &opts).unwrap()).a[0];
    assert!((a_cont - a_avg).abs() < 1e-3, "{a_cont} vs {a_avg}");
    assert_abs_diff_eq!(a_avg, 2.0, epsilon = 1e-9);
}

#[test]
fn stabilizer_extrapolation_stays_close() {
    let e = env(presets::traveling_wave());
    let g = TorusGrid::new(32, vec![64]);
    let opts = SolveOptions::default();
    let sc = ScalingExponents::critical();
    let plain = effective_coefficients(
        &e,
        &lambda_continuation(&e, &g, sc, &default_schedule(), &opts).unwrap(),
    );
    let rich = stabilized_effective(&e, &g, sc, &default_schedule(), g.dt(), &opts).unwrap();
    assert!((plain.a[0] - rich.a[0]).abs() < 5e-3, "{} vs {}", plain.a[0], rich.a[0]);
    assert_eq!(rich.provenance.solver, "continuation_richardson");
}

#[test]
fn schedule_errors() {
    let e = env(presets::sine_medium());
    let g = TorusGrid::new(4, vec![16]);
    let sc = ScalingExponents::critical();
    let opts = SolveOptions::default();
    for bad in [vec![], vec![0.5, 0.5], vec![0.1, 0.2], vec![-1.0]] {
        let err = lambda_continuation(&e, &g, sc, &bad, &opts).unwrap_err();
        assert_eq!(err.kind(), "InvalidSchedule");
    }
}

#[test]
fn iteration_cap_reports_divergence() {
    let e = env(presets::sine_medium());
    let g = TorusGrid::new(4, vec![64]);
    let opts = SolveOptions {
        max_iter: 2,
        tol: 1e-14,
        ..Default::default()
    };
    let err = lambda_continuation(&e, &g, ScalingExponents::critical(), &[0.01], &opts).unwrap_err();
    match err {
        CorrectorError::SolverDivergence {
            iterations,
            ref history,
            ..
        } => {
            assert!(iterations <= 4);
            assert!(!history.is_empty());
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn enhancement_by_cellular_flow() {
    let e = env(presets::cellular_flow(0.5));
    let sol = time_averaged_limit(&e, &TorusGrid::square(2, 1, 128), &SolveOptions::default()).unwrap();
    let eff = effective_coefficients(&e, &sol);
    assert_eq!(eff.a[1], eff.a[2]);
    assert!(eff.a_eigenvalues().iter().all(|l| *l >= 1.0 - 1e-6));
    // 512² reference value.
    assert_abs_diff_eq!(eff.a[0], 1.030_772_240_413, epsilon = 1e-4);
}

fn sbp_defect(seed: u64, d: usize) -> (f64, f64, f64) {
    let e = env(presets::random_admissible(d, seed));
    let g = grid_for(d);
    let m = DiscreteMedium::new(&e, &g);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = random_vec(&mut rng, g.len());
    let v = random_vec(&mut rng, g.len());
    let mut lu = vec![0.0; g.len()];
    m.minus_l(&u, &mut lu);
    let lhs = m.inner(&lu, &v);
    let rhs = m.form(&u, &v);
    let coercive = m.form(&u, &u) - e.constants().m * m.dirichlet(&u);
    (lhs - rhs, rhs.abs().max(1.0), coercive)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]
    #[test]
    fn summation_by_parts_and_coercivity(seed in 0u64..10_000, d in 1usize..=2) {
        let (defect, scale, coercive) = sbp_defect(seed, d);
        prop_assert!(defect.abs() <= 1e-12 * scale, "defect {defect}");
        prop_assert!(coercive >= -1e-10, "coercivity {coercive}");
    }

    #[test]
    fn stream_and_time_terms_are_antisymmetric(seed in 0u64..10_000) {
        let mut spec = presets::random_admissible(2, seed);
        for (k, f) in spec.a.iter_mut().enumerate() {
            *f = if k == 0 || k == 3 { TrigField::constant(0.0) } else { TrigField::zero() };
        }
        let e = Environment::build_unchecked(spec).unwrap();
        let g = grid_for(2);
        let m = DiscreteMedium::new(&e, &g);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_vec(&mut rng, g.len());
        prop_assert!(m.form(&u, &u).abs() < 1e-12);
        let op = ResolventOperator { medium: &m, lambda: 0.0, theta: 1.3, delta: 0.0, pin_mean: false };
        let mut y = vec![0.0; g.len()];
        op.apply(&u, &mut y);
        prop_assert!(m.inner(&y, &u).abs() < 1e-12);
    }
}
