use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use sthomog::environment::presets;
use sthomog::sde::*;
use sthomog::stats::{ks_critical, ks_statistic};
use sthomog::trig::TrigField;
use sthomog::{Environment, EnvironmentSpec, Payoff, ScalingExponents};

fn unit_env(d: usize) -> Environment {
    Environment::build(EnvironmentSpec::isotropic(d, 1.0), None).unwrap()
}

#[test]
fn regimes_and_theta() {
    assert_eq!(ScalingExponents::critical().regime(), Regime::Critical);
    assert_eq!(ScalingExponents::new(1.0, 1.0).unwrap().regime(), Regime::Sub);
    assert_eq!(ScalingExponents::new(3.0, 1.0).unwrap().regime(), Regime::Super);
    assert_eq!(ScalingExponents::critical().theta(0.01), 1.0);
    assert_abs_diff_eq!(
        ScalingExponents::new(1.0, 1.0).unwrap().theta(0.25),
        0.5,
        epsilon = 1e-15
    );
    assert_eq!(ScalingExponents::new(0.0, 1.0).unwrap_err().kind(), "InvalidScaling");
}

#[test]
fn brownian_motion_moments() {
    let env = unit_env(2);
    let sim = Simulator::new(&env, ScalingExponents::critical(), 1.0, 0.05).unwrap();
    let paths = sim.paths(0.0, &[0.0, 0.0], 1.0, 10_000, 1).unwrap();
    let cov = empirical_covariance(&paths, 1.0).unwrap();
    for i in 0..2 {
        assert!(cov.mean[i].abs() < 4.0 / 100.0);
        let v = cov.cov[i * 2 + i];
        assert!((0.94..=1.06).contains(&v), "variance {v}");
    }
    assert!(cov.cov[1].abs() < 4.0 * cov.stderr[1]);
}

#[test]
fn path_invariants() {
    let env = Environment::build(presets::sine_medium(), None).unwrap();
    let sim = Simulator::new(&env, ScalingExponents::critical(), 0.2, 0.005).unwrap();
    let p = sim.path(0.5, &[0.3], 1.5, 4, 2).unwrap();
    assert_eq!(p.t[0], 0.5);
    assert_eq!(p.state(0), &[0.3]);
    assert_eq!(p.q[0], 0.0);
    assert_eq!(*p.t.last().unwrap(), 1.5);
    assert!(p.t.windows(2).all(|w| w[1] > w[0]));
    let csv = p.to_csv();
    assert!(csv.starts_with("t,X1,Q\n"));
    assert_eq!(csv.lines().count(), p.len() + 1);
}

#[test]
fn errors_are_reported() {
    let env = unit_env(1);
    let err = Simulator::new(&env, ScalingExponents::critical(), 0.1, 0.01).unwrap_err();
    assert_eq!(err.kind(), "StepTooLarge");
    let sim = Simulator::new(&env, ScalingExponents::critical(), 0.1, 0.001).unwrap();
    assert_eq!(sim.path(1.0, &[0.0], 1.0, 0, 0).unwrap_err().kind(), "InvalidInterval");
    assert_eq!(
        sim.path(0.0, &[0.0, 1.0], 1.0, 0, 0).unwrap_err().kind(),
        "DimensionMismatch"
    );
    let p = sim.path(0.0, &[0.0], 1.0, 0, 0).unwrap();
    assert_eq!(
        empirical_covariance(std::slice::from_ref(&p), 1.0).unwrap_err().kind(),
        "DegenerateSample"
    );
    assert_eq!(
        empirical_covariance(&[p.clone(), p], 0.123_456_7).unwrap_err().kind(),
        "GridMismatch"
    );
    assert_eq!(
        Simulator::new(&env, ScalingExponents::critical(), -1.0, 0.01)
            .unwrap_err()
            .kind(),
        "InvalidEpsilon"
    );
}

#[test]
fn constant_potential_rate_is_exact() {
    let mut spec = presets::sine_medium();
    spec.d = TrigField::constant(0.7);
    let env = Environment::build(spec, None).unwrap();
    let sim = Simulator::new(&env, ScalingExponents::critical(), 0.3, 0.01).unwrap();
    for i in 0..5 {
        let p = sim.path(0.2, &[0.0], 1.2, 9, i).unwrap();
        for (t, q) in p.t.iter().zip(&p.q) {
            assert_abs_diff_eq!(*q, 0.7 * (t - 0.2), epsilon = 1e-14);
        }
    }
    let est = feynman_kac_estimate(
        &env,
        ScalingExponents::critical(),
        0.3,
        &[0.0],
        1.0,
        &Payoff::Constant { value: 1.0 },
        &McParams {
            n_paths: 50,
            h: 0.01,
            seed: 1,
        },
    )
    .unwrap();
    assert_abs_diff_eq!(est.mean, 0.7f64.exp(), epsilon = 1e-12);
    assert_eq!(est.stderr, 0.0);
}

#[test]
fn q_is_linear_in_c_and_d() {
    let base = presets::random_admissible(1, 3);
    let mut only_c = base.clone();
    only_c.d = TrigField::zero();
    let mut only_d = base.clone();
    only_d.f = vec![TrigField::zero()];
    let envs: Vec<Environment> = [base, only_c, only_d]
        .into_iter()
        .map(|s| Environment::build(s, None).unwrap())
        .collect();
    let sc = ScalingExponents::critical();
    let paths: Vec<SamplePath> = envs
        .iter()
        .map(|e| {
            Simulator::new(e, sc, 0.2, 0.002)
                .unwrap()
                .path(0.0, &[0.1], 1.0, 17, 3)
                .unwrap()
        })
        .collect();
    for k in 0..paths[0].len() {
        assert_eq!(paths[0].q[k], paths[1].q[k] + paths[2].q[k]);
        assert_eq!(paths[0].state(k), paths[1].state(k));
    }
}

#[test]
fn gaussian_convolution() {
    let env = unit_env(1);
    let est = feynman_kac_estimate(
        &env,
        ScalingExponents::critical(),
        1.0,
        &[0.0],
        1.0,
        &Payoff::standard_bump(1),
        &McParams {
            n_paths: 100_000,
            h: 0.1,
            seed: 3,
        },
    )
    .unwrap();
    assert!((est.mean - 0.5f64.sqrt()).abs() < 3.0 * est.stderr, "{est:?}");
}

#[test]
fn step_halving_is_within_noise() {
    let mut spec = EnvironmentSpec::isotropic(1, 2.0);
    spec.constants.k = 2.0;
    let env = Environment::build(spec, None).unwrap();
    let sc = ScalingExponents::critical();
    let var = |h: f64| {
        let t = Simulator::new(&env, sc, 1.0, h)
            .unwrap()
            .terminals(0.0, &[0.0], 1.0, 20_000, 5)
            .unwrap();
        let pts: Vec<Vec<f64>> = t.into_iter().map(|t| t.x).collect();
        covariance_of(1, &pts).unwrap()
    };
    let (a, b) = (var(0.1), var(0.05));
    assert!((a.cov[0] - b.cov[0]).abs() < 2.0 * (a.stderr[0] + b.stderr[0]));
    assert!((a.mean[0] - b.mean[0]).abs() < 2.0 * (a.cov[0] / 20_000.0).sqrt() * 2.0);
}

#[test]
fn frames_coincide_at_unit_scale() {
    let env = Environment::build(presets::traveling_wave(), None).unwrap();
    let sc = ScalingExponents::new(1.5, 1.0).unwrap();
    let sim = Simulator::new(&env, sc, 1.0, 0.01).unwrap();
    let a = sim.path(0.0, &[0.0], 1.0, 8, 0).unwrap();
    let b = sim.rescaled_path(1.0, 8, 0).unwrap();
    assert_eq!(a.x, b.x);
    assert_eq!(a.t, b.t);
}

#[test]
fn direct_and_rescaled_agree_in_law() {
    let env = Environment::build(presets::sine_medium(), None).unwrap();
    let sim = Simulator::new(&env, ScalingExponents::critical(), 0.1, 0.0025).unwrap();
    let n = 2000;
    let crit = ks_critical(n, n, 0.01);
    let reps = 20;
    let mut rejections = 0;
    for r in 0..reps {
        let direct: Vec<f64> = sim
            .terminals(0.0, &[0.0], 1.0, n, 1000 + r)
            .unwrap()
            .iter()
            .map(|t| t.x[0])
            .collect();
        let rescaled: Vec<f64> = (0..n as u64)
            .map(|i| *sim.rescaled_path(1.0, 5000 + r, i).unwrap().terminal().first().unwrap())
            .collect();
        if ks_statistic(&direct, &rescaled) > crit {
            rejections += 1;
        }
    }
    assert!(rejections <= 1, "{rejections} rejections in {reps}");
}

#[test]
fn parallel_matches_sequential() {
    let env = Environment::build(presets::separable(), None).unwrap();
    let sim = Simulator::new(&env, ScalingExponents::critical(), 0.3, 0.01).unwrap();
    let par = sim.terminals(0.0, &[0.1], 1.0, 64, 21).unwrap();
    for (i, t) in par.iter().enumerate() {
        assert_eq!(*t, sim.terminal(0.0, &[0.1], 1.0, 21, i as u64).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn same_seed_same_path(seed in any::<u64>(), idx in 0u64..1000, eps in 0.05..1.0f64) {
        let env = Environment::build(presets::random_admissible(2, seed % 17), None).unwrap();
        let sc = ScalingExponents::critical();
        let h = sc.max_step(eps, 0.25);
        let sim = Simulator::new(&env, sc, eps, h).unwrap();
        let a = sim.path(0.0, &[0.2, -0.4], 0.5, seed, idx).unwrap();
        let b = sim.path(0.0, &[0.2, -0.4], 0.5, seed, idx).unwrap();
        prop_assert_eq!(a, b);
    }
}
