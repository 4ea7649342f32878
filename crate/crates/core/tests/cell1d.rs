use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use sthomog::cell1d::*;
use sthomog::environment::presets;
use sthomog::sde::Regime;
use sthomog::trig::{Mode, TrigField};

const SQRT3: f64 = 1.732_050_807_568_877_2;

fn coeff(f: TrigField) -> Coefficient1D {
    Coefficient1D::new(f).unwrap()
}

fn sine() -> Coefficient1D {
    coeff(presets::sine_medium().a[0].clone())
}

fn wave() -> Coefficient1D {
    coeff(presets::traveling_wave().a[0].clone())
}

#[test]
fn constant_coefficient() {
    let a = coeff(TrigField::constant(0.7));
    assert_abs_diff_eq!(effective_subcritical(&a, 64).a_eff, 0.7, epsilon = 1e-14);
    assert_abs_diff_eq!(effective_supercritical(&a, 64).a_eff, 0.7, epsilon = 1e-14);
    let s = effective_critical(&a, 8, 8, 1e-12).unwrap();
    assert_abs_diff_eq!(s.a_eff, 0.7, epsilon = 1e-12);
    assert!(s.corrector.iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn harmonic_closed_forms() {
    for a in [sine(), wave()] {
        assert_abs_diff_eq!(effective_subcritical(&a, 2048).a_eff, SQRT3, epsilon = 1e-6);
    }
    assert_abs_diff_eq!(effective_supercritical(&sine(), 2048).a_eff, SQRT3, epsilon = 1e-6);
    assert_abs_diff_eq!(effective_supercritical(&wave(), 2048).a_eff, 2.0, epsilon = 1e-10);
}

#[test]
fn separable_medium_collapses_regimes() {
    let a = coeff(presets::separable().a[0].clone());
    assert_abs_diff_eq!(effective_subcritical(&a, 512).a_eff, SQRT3, epsilon = 1e-6);
    assert_abs_diff_eq!(effective_supercritical(&a, 512).a_eff, SQRT3, epsilon = 1e-6);
}

#[test]
fn time_independent_critical_reduces_to_slice() {
    let s = effective_critical(&sine(), 256, 256, 1e-10).unwrap();
    assert_abs_diff_eq!(s.a_eff, SQRT3, epsilon = 5e-3);
    assert_eq!(s.regime, Regime::Critical);
    assert!(s.residual <= 1e-10);
}

#[test]
fn critical_refinement_settles() {
    let r = critical_refinement(&wave(), &[128, 256, 512], 1e-10).unwrap();
    assert!(r.drifts.iter().all(|d| *d < 1e-3), "{r:?}");
    assert!(r.richardson > SQRT3 && r.richardson < 2.0);
}

#[test]
fn critical_corrector_is_mean_free_and_conservative() {
    let a = coeff(presets::separable().a[0].clone());
    let s = effective_critical(&a, 64, 64, 1e-11).unwrap();
    let (nt, nx) = (s.n_t, s.n_x);
    let mean = s.corrector.iter().sum::<f64>() / (nt * nx) as f64;
    assert!(mean.abs() < 1e-12);
    // Σ flux · ∂ₓv over the half levels vanishes.
    let dx = 1.0 / nx as f64;
    let v = &s.corrector;
    let mut acc = 0.0;
    let mut scale = 0.0;
    for i in 0..nt {
        let ip = (i + nt - 1) % nt;
        for j in 0..nx {
            let jp = (j + 1) % nx;
            let g = 0.5 * ((v[i * nx + jp] - v[i * nx + j]) + (v[ip * nx + jp] - v[ip * nx + j])) / dx;
            acc += s.flux[i * nx + j] * g;
            scale += (s.flux[i * nx + j] * g).abs();
        }
    }
    assert!(acc.abs() <= 1e-8 * scale.max(1.0), "{acc} vs {scale}");
}

#[test]
fn slice_fluxes_are_constant() {
    let s = subcritical_cells(&wave(), 16, 128);
    for i in 0..16 {
        let row = &s.flux[i * 128..(i + 1) * 128];
        let m = row.iter().sum::<f64>() / 128.0;
        let sd = (row.iter().map(|f| (f - m).powi(2)).sum::<f64>() / 128.0).sqrt();
        assert!(sd <= 1e-12 * m.abs());
        let vm = s.corrector[i * 128..(i + 1) * 128].iter().sum::<f64>();
        assert!(vm.abs() < 1e-12);
    }
    assert_abs_diff_eq!(s.a_eff, SQRT3, epsilon = 1e-3);
    assert!(s.corrector_csv().starts_with("t,x,v\n"));
}

#[test]
fn degenerate_harmonic_mean_is_flagged() {
    let a = coeff(presets::degenerate().a[0].clone());
    let r = effective_subcritical(&a, 256);
    assert!(r.degenerate);
    assert_eq!(r.a_eff, 0.0);
    let r = effective_supercritical(&a, 256);
    assert!(r.degenerate);
    assert_eq!(r.a_eff, 0.0);
    // Face midpoints miss the zeros of this coefficient, so the discrete
    // problem stays regular.
    assert!(effective_critical(&a, 16, 16, 1e-10).is_ok());
    // Zeros at x = ¼ and ¾ fall on faces when n_x ≡ 2 (mod 4).
    let a = coeff(TrigField::constant(0.5).with_mode(Mode::new(0, vec![2], 0.5, 0.0)));
    let err = effective_critical(&a, 8, 18, 1e-10).unwrap_err();
    assert_eq!(err.kind(), "SingularSystem");
}

#[test]
fn input_errors() {
    let err = Coefficient1D::new(TrigField::constant(-1.0)).unwrap_err();
    assert_eq!(err.kind(), "NegativeCoefficient");
    let err = Coefficient1D::new(TrigField::constant(1.0).with_mode(Mode::new(0, vec![1, 1], 0.1, 0.0))).unwrap_err();
    assert_eq!(err.kind(), "NotOneDimensional");
    assert_eq!(
        effective_critical(&sine(), 4, 2, 1e-8).unwrap_err().kind(),
        "GridTooCoarse"
    );
}

#[test]
fn regime_dispatch() {
    let (sub, _) = effective_for_regime(&wave(), Regime::Sub, 1024, (64, 64), 1e-10).unwrap();
    let (sup, _) = effective_for_regime(&wave(), Regime::Super, 1024, (64, 64), 1e-10).unwrap();
    let (crit, _) = effective_for_regime(&wave(), Regime::Critical, 1024, (64, 64), 1e-10).unwrap();
    assert!(sup - sub > 0.25);
    assert!(crit > 1.5 && crit < 2.5);
}

fn arb_coefficient() -> impl Strategy<Value = TrigField> {
    let mode = (-2i32..=2, -3i32..=3, 0.0..0.4f64, 0.0..std::f64::consts::TAU)
        .prop_map(|(kt, kx, amp, ph)| Mode::new(kt, vec![kx], amp, ph));
    (1.5..3.0f64, proptest::collection::vec(mode, 1..4)).prop_map(|(offset, modes)| TrigField { offset, modes })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn effective_values_lie_between_extremes(f in arb_coefficient()) {
        let a = coeff(f.clone());
        let mut mean = 0.0;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..64 {
            for j in 0..64 {
                let v = f.eval(i as f64 / 64.0, &[j as f64 / 64.0]);
                mean += v / 4096.0;
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        let tol = 1e-3;
        let sub = effective_subcritical(&a, 256).a_eff;
        let sup = effective_supercritical(&a, 256).a_eff;
        let crit = effective_critical(&a, 32, 32, 1e-10).unwrap().a_eff;
        for v in [sub, sup, crit] {
            prop_assert!(v >= lo - tol && v <= hi + tol, "{v} outside [{lo}, {hi}]");
        }
        // Harmonic mean never exceeds the arithmetic mean.
        prop_assert!(sub <= mean + 1e-9);
        prop_assert!(sup <= mean + 1e-9);
    }
}
