use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use sthomog::environment::{presets, EnvironmentSpec, EvalScratch, ValidationGrid};
use sthomog::trig::{Mode, TrigField};
use sthomog::Environment;

#[test]
fn constant_environment() {
    let env = Environment::build(presets::constant(1.0), None).unwrap();
    let c = env.eval_coefficients(0.3, &[0.7]);
    assert_eq!(c.a, vec![1.0]);
    assert_eq!(c.sigma, vec![1.0]);
    assert_eq!(c.b, vec![0.0]);
    assert_eq!(c.c, 0.0);
    assert_eq!(env.z(), 1.0);
}

#[test]
fn sine_medium_point_values() {
    let env = Environment::build(presets::sine_medium(), None).unwrap();
    let c = env.eval_coefficients(0.0, &[0.25]);
    assert_abs_diff_eq!(c.a[0], 3.0, epsilon = 1e-14);
    assert_abs_diff_eq!(c.sigma[0], 3f64.sqrt(), epsilon = 1e-14);
    assert_abs_diff_eq!(c.b[0], 0.0, epsilon = 1e-13);
    let c = env.eval_coefficients(0.0, &[0.0]);
    assert_abs_diff_eq!(c.b[0], std::f64::consts::PI, epsilon = 1e-13);
}

#[test]
fn stream_bound_violation() {
    let mut spec = EnvironmentSpec::isotropic(2, 1.0);
    spec.h[1] = TrigField::constant(2.0);
    spec.h[2] = TrigField::constant(-2.0);
    spec.constants.c1h = 1.0;
    spec.constants.k = 3.0;
    let err = Environment::build(spec, None).unwrap_err();
    assert_eq!(err.kind(), "BoundViolation");
}

#[test]
fn validation_error_kinds() {
    let mut spec = EnvironmentSpec::isotropic(2, 1.0);
    spec.h[1] = TrigField::constant(0.1);
    assert_eq!(
        Environment::build(spec, None).unwrap_err().kind(),
        "AntisymmetryViolation"
    );

    let mut spec = EnvironmentSpec::isotropic(2, 1.0);
    spec.a[1] = TrigField::constant(0.1);
    assert_eq!(Environment::build(spec, None).unwrap_err().kind(), "SymmetryViolation");

    let mut spec = presets::constant(1.0);
    spec.a[0] = TrigField::constant(-1.0);
    assert_eq!(Environment::build(spec, None).unwrap_err().kind(), "PSDViolation");

    let mut spec = presets::constant(1.0);
    spec.v = TrigField::zero().with_mode(Mode::new(1, vec![1], 0.1, 0.0));
    assert_eq!(
        Environment::build(spec, None).unwrap_err().kind(),
        "TimeDependenceViolation"
    );

    let mut spec = presets::constant(1.0);
    spec.constants.m = 0.0;
    assert_eq!(Environment::build(spec, None).unwrap_err().kind(), "InvalidConstant");

    let grid = ValidationGrid { n_t: 1, n_x: vec![1] };
    let err = Environment::build(presets::sine_medium(), Some(&grid)).unwrap_err();
    assert_eq!(err.kind(), "UnderResolvedGrid");

    let mut spec = presets::constant(1.0);
    spec.f = vec![TrigField::zero(), TrigField::zero()];
    assert_eq!(Environment::build(spec, None).unwrap_err().kind(), "DimensionMismatch");
}

#[test]
fn every_preset_validates() {
    for spec in [
        presets::constant(0.5),
        presets::sine_medium(),
        presets::traveling_wave(),
        presets::separable(),
        presets::degenerate(),
        presets::potential_medium(),
        presets::cellular_flow(0.5),
    ] {
        Environment::build(spec, None).unwrap();
    }
}

#[test]
fn json_round_trip() {
    for spec in [
        presets::separable(),
        presets::cellular_flow(0.5),
        presets::random_admissible(2, 11),
    ] {
        let text = spec.to_json();
        let back = EnvironmentSpec::from_json(&text).unwrap();
        assert_eq!(spec, back);
    }
    let err = EnvironmentSpec::from_json("{ not json").unwrap_err();
    assert_eq!(err.kind(), "InvalidJson");
}

#[test]
fn random_phase_is_deterministic() {
    let spec = presets::separable();
    assert_eq!(spec.sample_random_phase(5), spec.sample_random_phase(5));
    assert_ne!(spec.sample_random_phase(5), spec.sample_random_phase(6));
    let flat = presets::constant(2.0);
    assert_eq!(flat.sample_random_phase(9), flat);
    for seed in 0..4 {
        Environment::build(presets::traveling_wave().sample_random_phase(seed), None).unwrap();
        Environment::build(presets::cellular_flow(0.5).sample_random_phase(seed), None).unwrap();
    }
}

#[test]
fn potential_normalization() {
    let env = Environment::build(presets::potential_medium(), None).unwrap();
    // ∫ e^{-sin 2πx} dx = I₀(1)
    assert_abs_diff_eq!(env.z(), 1.266_065_877_752_008_4, epsilon = 1e-13);
}

fn pi_average_of_c(env: &Environment, n: usize) -> f64 {
    let d = env.dimension();
    let mut s = EvalScratch::new(d);
    let mut acc = 0.0;
    let total = n.pow(d as u32);
    let mut x = vec![0.0; d];
    for t in [0.0, 0.37] {
        for flat in 0..total {
            let mut r = flat;
            for xi in x.iter_mut() {
                *xi = (r % n) as f64 / n as f64;
                r /= n;
            }
            acc += env.c_value(t, &x, &mut s) * env.pi_density(&x);
        }
    }
    acc / (2 * total) as f64
}

#[test]
fn c_has_zero_pi_average() {
    for seed in 0..5 {
        for d in [1, 2] {
            let env = Environment::build(presets::random_admissible(d, seed), None).unwrap();
            let n = if d == 1 { 256 } else { 64 };
            assert!(pi_average_of_c(&env, n).abs() < 1e-10, "seed {seed} d {d}");
        }
    }
}

fn arb_field(d: usize) -> impl Strategy<Value = TrigField> {
    let mode = (
        -2i32..=2,
        proptest::collection::vec(-3i32..=3, d),
        -1.0..1.0f64,
        0.0..std::f64::consts::TAU,
    )
        .prop_map(|(kt, kx, amp, phase)| Mode::new(kt, kx, amp, phase));
    (-1.0..1.0f64, proptest::collection::vec(mode, 0..4)).prop_map(|(offset, modes)| TrigField { offset, modes })
}

proptest! {
    #[test]
    fn derivatives_match_central_differences(g in arb_field(2), t in 0.0..1.0f64, x0 in 0.0..1.0f64, x1 in 0.0..1.0f64) {
        let h = 1e-5;
        let x = [x0, x1];
        for axis in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[axis] += h;
            xm[axis] -= h;
            let fd = (g.eval(t, &xp) - g.eval(t, &xm)) / (2.0 * h);
            let exact = g.dx(axis, t, &x);
            prop_assert!((fd - exact).abs() <= 1e-6 * (1.0 + exact.abs()));
        }
        let fd = (g.eval(t + h, &x) - g.eval(t - h, &x)) / (2.0 * h);
        let exact = g.dt(t, &x);
        prop_assert!((fd - exact).abs() <= 1e-6 * (1.0 + exact.abs()));
    }

    #[test]
    fn unit_shifts_are_exact(seed in 0u64..50, i in 0u32..64, j in 0u32..64, k in 0u32..64) {
        // Dyadic points, so that `t + 1` carries no rounding.
        let (t, x0, x1) = (i as f64 / 64.0, j as f64 / 64.0, k as f64 / 64.0);
        let env = Environment::build(presets::random_admissible(2, seed), None).unwrap();
        let base = env.eval_coefficients(t, &[x0, x1]);
        let shifted = env.eval_coefficients(t + 1.0, &[x0 + 1.0, x1]);
        prop_assert_eq!(base.a, shifted.a);
        prop_assert_eq!(base.b, shifted.b);
        prop_assert_eq!(base.c, shifted.c);
    }

    #[test]
    fn random_environments_are_admissible(seed in 0u64..200, d in 1usize..=2) {
        let env = Environment::build(presets::random_admissible(d, seed), None);
        prop_assert!(env.is_ok(), "{:?}", env.err());
    }

    #[test]
    fn sigma_squares_to_a(seed in 0u64..100, t in 0.0..1.0f64, x0 in 0.0..1.0f64, x1 in 0.0..1.0f64) {
        let env = Environment::build(presets::random_admissible(2, seed), None).unwrap();
        let c = env.eval_coefficients(t, &[x0, x1]);
        for i in 0..2 {
            for j in 0..2 {
                let s: f64 = (0..2).map(|k| c.sigma[i * 2 + k] * c.sigma[k * 2 + j]).sum();
                prop_assert!((s - c.a[i * 2 + j]).abs() < 1e-12);
            }
            prop_assert_eq!(c.h[i * 2 + i], 0.0);
        }
        prop_assert_eq!(c.h[1], -c.h[2]);
    }
}
