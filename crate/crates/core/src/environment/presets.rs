//! Ready-made environments used by examples, tests and configs.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Environment, EnvironmentSpec, EvalScratch, StructuralConstants, ValidationGrid};
use crate::trig::{Mode, TrigField};

fn constants(m: f64, big_m: f64, k: f64, c1h: f64, c2h: f64, c2a: f64) -> StructuralConstants {
    StructuralConstants {
        m,
        big_m,
        k,
        c1h,
        c2h,
        c2a,
    }
}

fn one_d(a: TrigField, a_tilde: TrigField, constants: StructuralConstants) -> EnvironmentSpec {
    EnvironmentSpec {
        dimension: 1,
        a: vec![a],
        a_tilde: vec![a_tilde],
        h: vec![TrigField::zero()],
        v: TrigField::zero(),
        f: vec![TrigField::zero()],
        d: TrigField::zero(),
        constants,
    }
}

/// `a = κ` in one dimension.
pub fn constant(kappa: f64) -> EnvironmentSpec {
    EnvironmentSpec::isotropic(1, kappa)
}

/// `a = ã = 2 + sin(2πx)`.
pub fn sine_medium() -> EnvironmentSpec {
    let a = TrigField::spatial_sine(2.0, 1.0, vec![1]);
    one_d(a.clone(), a, constants(1.0, 1.0, 4.0, 1.0, 1.0, 1.0))
}

/// `a = 2 + sin(2π(x − t))`, `ã = 1`.
pub fn traveling_wave() -> EnvironmentSpec {
    let a = TrigField::constant(2.0).with_mode(Mode::new(-1, vec![1], 1.0, -FRAC_PI_2));
    one_d(a, TrigField::constant(1.0), constants(1.0, 3.0, 4.0, 1.0, 1.0, 7.0))
}

/// `a = (1 + ½cos 2πt)(2 + sin 2πx)`, `ã = 1`.
pub fn separable() -> EnvironmentSpec {
    let a = TrigField::constant(2.0)
        .with_mode(Mode::new(0, vec![1], 1.0, -FRAC_PI_2))
        .with_mode(Mode::new(1, vec![0], 1.0, 0.0))
        .with_mode(Mode::new(1, vec![1], 0.25, -FRAC_PI_2))
        .with_mode(Mode::new(-1, vec![1], 0.25, -FRAC_PI_2));
    one_d(a, TrigField::constant(1.0), constants(0.5, 4.5, 5.0, 1.0, 1.0, 10.0))
}

/// `a = ã = sin²(2πx)`, vanishing at `x = 0` and `x = ½`.
pub fn degenerate() -> EnvironmentSpec {
    let a = TrigField::constant(0.5).with_mode(Mode::new(0, vec![2], -0.5, 0.0));
    one_d(a.clone(), a, constants(1.0, 1.0, 4.0, 1.0, 1.0, 1.0))
}

/// `a = ã = 1` with potential `V = ½ sin(2πx)`.
pub fn potential_medium() -> EnvironmentSpec {
    let mut spec = constant(1.0);
    spec.v = TrigField::spatial_sine(0.0, 0.5, vec![1]);
    spec.constants.k = 4.0;
    spec
}

/// Two-dimensional cellular flow: `a = ã = Id`, `H₁₂ = γ sin(2πx₁) sin(2πx₂)`.
pub fn cellular_flow(gamma: f64) -> EnvironmentSpec {
    let h12 = TrigField::zero()
        .with_mode(Mode::new(0, vec![1, -1], 0.5 * gamma, 0.0))
        .with_mode(Mode::new(0, vec![1, 1], -0.5 * gamma, 0.0));
    let mut spec = EnvironmentSpec::isotropic(2, 1.0);
    spec.h[1] = h12.clone();
    spec.h[2] = h12.scaled(-1.0);
    spec.constants = constants(1.0, 1.0, 1.0 + PI * gamma.abs(), gamma.abs().max(1.0), 1.0, 1.0);
    spec
}

fn random_field(rng: &mut ChaCha8Rng, d: usize, offset: f64, budget: f64, time: bool) -> TrigField {
    let n_modes = rng.random_range(1..=3);
    let mut g = TrigField::constant(offset);
    let weights: Vec<f64> = (0..n_modes).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = weights.iter().sum();
    for w in weights {
        let kt = if time { rng.random_range(-1..=1) } else { 0 };
        let kx: Vec<i32> = (0..d).map(|_| rng.random_range(-2..=2)).collect();
        let amp = budget * w / total;
        g = g.with_mode(Mode::new(kt, kx, amp, rng.random_range(0.0..std::f64::consts::TAU)));
    }
    g
}

/// A randomly drawn admissible environment in dimension 1 or 2.
///
/// `ã` has eigenvalues in `[1, 2]`, `a = ã + ρ(t,x)·Id` with `|ρ| ≤ ¼`, so
/// `¾ ã ⪯ a ⪯ 5⁄4 ã`. The stream matrix, potential, `f` and `d` are small
/// trigonometric fields. `K` is set from a sampled sup norm.
pub fn random_admissible(d: usize, seed: u64) -> EnvironmentSpec {
    assert!(d == 1 || d == 2, "random environments are drawn in d = 1, 2");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a_tilde = vec![TrigField::zero(); d * d];
    for i in 0..d {
        for j in i..d {
            let g = if i == j {
                random_field(&mut rng, d, 1.5, 0.25, false)
            } else {
                random_field(&mut rng, d, 0.0, 0.25, false)
            };
            a_tilde[i * d + j] = g.clone();
            a_tilde[j * d + i] = g;
        }
    }
    let rho = random_field(&mut rng, d, 0.0, 0.25, true);
    let mut a = a_tilde.clone();
    for i in 0..d {
        let diag = &mut a[i * d + i];
        diag.modes.extend(rho.modes.iter().cloned());
    }
    let mut h = vec![TrigField::zero(); d * d];
    if d == 2 {
        let g = random_field(&mut rng, d, 0.0, 0.3, true);
        h[1] = g.clone();
        h[2] = g.scaled(-1.0);
    }
    let v = random_field(&mut rng, d, 0.0, 0.3, false);
    let f = (0..d).map(|_| random_field(&mut rng, d, 0.0, 0.3, true)).collect();
    let dd = random_field(&mut rng, d, 0.0, 0.3, true);
    let tau = std::f64::consts::TAU;
    let mut spec = EnvironmentSpec {
        dimension: d,
        a,
        a_tilde,
        h,
        v,
        f,
        d: dd,
        constants: constants(0.75, 1.25, 1.0, 1.0, 0.3 * tau + 1e-3, 0.25 * tau + 1e-3),
    };
    spec.constants.k = 1.5 * sampled_sup(&spec) + 1.0;
    spec
}

fn sampled_sup(spec: &EnvironmentSpec) -> f64 {
    let env = Environment::build_unchecked(spec.clone()).expect("shapes are consistent");
    let grid = ValidationGrid::for_spec(spec);
    let d = spec.dimension;
    let mut s = EvalScratch::new(d);
    let mut x = vec![0.0; d];
    let mut sup: f64 = 0.0;
    let n_space: usize = grid.n_x.iter().product();
    for it in 0..grid.n_t {
        let t = it as f64 / grid.n_t as f64;
        for flat in 0..n_space {
            let mut r = flat;
            for (xi, n) in x.iter_mut().zip(&grid.n_x) {
                *xi = (r % n) as f64 / *n as f64;
                r /= n;
            }
            let q = env.eval_coefficients(t, &x);
            let c = env.c_value(t, &x, &mut s);
            for v in
                q.a.iter()
                    .chain(&q.sigma)
                    .chain(&q.sigma_tilde)
                    .chain(&q.a_tilde)
                    .chain(&q.h)
                    .chain(&q.b)
            {
                sup = sup.max(v.abs());
            }
            sup = sup.max(q.v.abs()).max(c.abs()).max(q.d.abs());
        }
    }
    sup
}
