use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use sthomog::environment::presets;
use sthomog::sde::McParams;
use sthomog::stats::*;
use sthomog::trig::{Mode, TrigField};
use sthomog::{Environment, EnvironmentSpec, ScalingExponents};

// I₁(1)/I₀(1)
const BESSEL_RATIO: f64 = 0.446_389_965_896_453_2;

fn sine_mode(d: usize) -> TrigField {
    let mut kx = vec![0; d];
    kx[0] = 1;
    TrigField::spatial_sine(0.0, 1.0, kx)
}

#[test]
fn pi_averages() {
    let flat = Environment::build(EnvironmentSpec::isotropic(2, 1.0), None).unwrap();
    let m = PiMeasure::uniform(&flat, 1, 32);
    assert_abs_diff_eq!(m.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(
        pi_average(&flat, &m, &Observable::Constant { value: 1.0 }),
        1.0,
        epsilon = 1e-12
    );
    assert!(pi_average(&flat, &m, &Observable::Field { field: sine_mode(2) }).abs() <= 1e-12);

    let pot = Environment::build(presets::potential_medium(), None).unwrap();
    let g = Observable::Field { field: sine_mode(1) };
    let m = PiMeasure::resolving(&pot, &g);
    assert_abs_diff_eq!(pi_average(&pot, &m, &g), -BESSEL_RATIO, epsilon = 1e-12);
}

#[test]
fn constant_observable_is_exact() {
    let pot = Environment::build(presets::potential_medium(), None).unwrap();
    let mc = McParams {
        n_paths: 64,
        h: 0.0025,
        seed: 4,
    };
    let r = ergodic_average_check(
        &pot,
        ScalingExponents::critical(),
        0.1,
        &Observable::Constant { value: 0.75 },
        2.0,
        &mc,
        true,
    )
    .unwrap();
    assert_eq!(r.estimate, 1.5);
    assert_eq!(r.stderr, 0.0);
    assert_eq!(r.target, 1.5);
}

#[test]
fn c_field_averages_to_zero() {
    let mut spec = presets::sine_medium();
    spec.f = vec![TrigField::zero().with_mode(Mode::new(1, vec![1], 0.5, 0.3))];
    spec.constants.k = 20.0;
    let env = Environment::build(spec, None).unwrap();
    let mc = McParams {
        n_paths: 1000,
        h: 0.0025,
        seed: 12,
    };
    let r = ergodic_average_check(&env, ScalingExponents::critical(), 0.1, &Observable::C, 1.0, &mc, false).unwrap();
    assert!(r.target.abs() < 1e-12);
    assert!(r.gap <= 3.0 * r.stderr, "{r:?}");
}

#[test]
fn observable_dimension_is_checked() {
    let env = Environment::build(presets::sine_medium(), None).unwrap();
    let mc = McParams {
        n_paths: 4,
        h: 0.0025,
        seed: 1,
    };
    let err = ergodic_average_check(
        &env,
        ScalingExponents::critical(),
        0.1,
        &Observable::Drift { component: 3 },
        1.0,
        &mc,
        false,
    )
    .unwrap_err();
    assert_eq!(err.kind(), "DimensionMismatch");
}

#[test]
fn zero_observable_has_zero_modulus() {
    let env = Environment::build(presets::constant(1.0), None).unwrap();
    let mc = McParams {
        n_paths: 8,
        h: 0.0025,
        seed: 1,
    };
    let r = modulus_diagnostic(
        &env,
        ScalingExponents::critical(),
        0.1,
        ModulusTarget::C,
        1.0,
        &[0.1, 0.05],
        &mc,
    )
    .unwrap();
    assert!(r.rows.iter().all(|row| row.modulus == 0.0 && row.ratio == 0.0));
    assert!(!r.flagged);
}

#[test]
fn modulus_shrinks_with_window() {
    let mut spec = presets::constant(1.0);
    spec.f = vec![sine_mode(1)];
    spec.constants.k = 20.0;
    let env = Environment::build(spec, None).unwrap();
    let mc = McParams {
        n_paths: 50,
        h: 0.0025,
        seed: 3,
    };
    let r = modulus_diagnostic(
        &env,
        ScalingExponents::critical(),
        0.1,
        ModulusTarget::C,
        1.0,
        &[0.1, 0.05, 0.025],
        &mc,
    )
    .unwrap();
    assert!(r.rows.windows(2).all(|w| w[1].modulus <= w[0].modulus));
    assert!(r.rows.iter().all(|row| row.ratio.is_finite() && row.ratio > 0.0));
}

#[test]
fn ks_detects_shift() {
    let a: Vec<f64> = (0..500).map(|i| i as f64 / 500.0).collect();
    let b: Vec<f64> = a.iter().map(|v| v + 0.3).collect();
    assert!(ks_statistic(&a, &b) > ks_critical(500, 500, 0.01));
    assert!(ks_statistic(&a, &a) < 1e-12);
}

proptest! {
    #[test]
    fn welford_matches_two_pass(values in proptest::collection::vec(-100.0..100.0f64, 2..200)) {
        let mut w = Welford::default();
        values.iter().for_each(|v| w.push(*v));
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        prop_assert!((w.mean() - mean).abs() < 1e-9);
        prop_assert!((w.variance() - var).abs() < 1e-7 * var.max(1.0));
    }

    #[test]
    fn oscillation_is_monotone_in_window(values in proptest::collection::vec(-1.0..1.0f64, 1..300), w in 0usize..40) {
        prop_assert!(sliding_oscillation(&values, w) <= sliding_oscillation(&values, w + 1));
    }

    #[test]
    fn pure_modes_average_to_zero(kt in -3i32..=3, k1 in -3i32..=3, k2 in -3i32..=3, phase in 0.0..std::f64::consts::TAU) {
        prop_assume!(kt != 0 || k1 != 0 || k2 != 0);
        let env = Environment::build(EnvironmentSpec::isotropic(2, 1.0), None).unwrap();
        let g = Observable::Field { field: TrigField::zero().with_mode(Mode::new(kt, vec![k1, k2], 1.0, phase)) };
        let m = PiMeasure::resolving(&env, &g);
        prop_assert!(pi_average(&env, &m, &g).abs() <= 1e-12);
    }
}
