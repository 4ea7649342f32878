//! Trigonometric polynomials on the unit space-time torus.
//!
//! A [`TrigField`] is a finite sum
//!
//! ```text
//! g(t, x) = offset + Σ_m amp_m · cos(2π (kt_m · t + kx_m · x) + phase_m)
//! ```
//!
//! with integer wavenumbers, so it is 1-periodic in `t` and in every `x_i`.
//! Derivatives are taken term by term and are exact.

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

/// One Fourier mode of a [`TrigField`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub kt: i32,
    pub kx: Vec<i32>,
    pub amp: f64,
    pub phase: f64,
}

impl Mode {
    pub fn new(kt: i32, kx: Vec<i32>, amp: f64, phase: f64) -> Self {
        Self { kt, kx, amp, phase }
    }

    #[inline]
    fn argument(&self, t: f64, x: &[f64]) -> f64 {
        let mut s = self.kt as f64 * t;
        for (k, xi) in self.kx.iter().zip(x) {
            s += *k as f64 * xi;
        }
        // Reduce before scaling so that integer shifts of (t, x) give the
        // same rounded argument.
        TAU * (s - s.floor()) + self.phase
    }
}

/// Scalar trigonometric polynomial, period 1 in every variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigField {
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub modes: Vec<Mode>,
}

impl TrigField {
    pub fn constant(value: f64) -> Self {
        Self {
            offset: value,
            modes: Vec::new(),
        }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.modes.push(mode);
        self
    }

    /// `offset + amp · sin(2π k·x)` in `d` dimensions, time independent.
    pub fn spatial_sine(offset: f64, amp: f64, kx: Vec<i32>) -> Self {
        Self::constant(offset).with_mode(Mode::new(0, kx, amp, -std::f64::consts::FRAC_PI_2))
    }

    pub fn is_zero(&self) -> bool {
        self.offset == 0.0 && self.modes.iter().all(|m| m.amp == 0.0)
    }

    pub fn is_constant(&self) -> bool {
        self.modes.iter().all(|m| m.amp == 0.0)
    }

    pub fn is_time_independent(&self) -> bool {
        self.modes.iter().all(|m| m.kt == 0 || m.amp == 0.0)
    }

    pub fn max_abs_kt(&self) -> u32 {
        self.modes.iter().map(|m| m.kt.unsigned_abs()).max().unwrap_or(0)
    }

    pub fn max_abs_kx(&self, axis: usize) -> u32 {
        self.modes
            .iter()
            .map(|m| m.kx.get(axis).map_or(0, |k| k.unsigned_abs()))
            .max()
            .unwrap_or(0)
    }

    /// Upper bound Σ|amp| + |offset| on the sup norm.
    pub fn sup_bound(&self) -> f64 {
        self.offset.abs() + self.modes.iter().map(|m| m.amp.abs()).sum::<f64>()
    }

    /// Checks every mode carries a wavevector of length `d`.
    pub fn has_dimension(&self, d: usize) -> bool {
        self.modes.iter().all(|m| m.kx.len() == d)
    }

    #[inline]
    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        let mut v = self.offset;
        for m in &self.modes {
            v += m.amp * m.argument(t, x).cos();
        }
        v
    }

    /// Value plus the spatial gradient, written into `grad` (length `d`).
    #[inline]
    pub fn eval_with_grad(&self, t: f64, x: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut v = self.offset;
        for m in &self.modes {
            let (s, c) = m.argument(t, x).sin_cos();
            v += m.amp * c;
            let w = -m.amp * TAU * s;
            for (g, k) in grad.iter_mut().zip(&m.kx) {
                *g += w * *k as f64;
            }
        }
        v
    }

    /// Exact partial derivative in `x_axis`.
    pub fn dx(&self, axis: usize, t: f64, x: &[f64]) -> f64 {
        self.modes
            .iter()
            .map(|m| -m.amp * TAU * m.kx[axis] as f64 * m.argument(t, x).sin())
            .sum()
    }

    /// Exact partial derivative in `t`.
    pub fn dt(&self, t: f64, x: &[f64]) -> f64 {
        self.modes
            .iter()
            .map(|m| -m.amp * TAU * m.kt as f64 * m.argument(t, x).sin())
            .sum()
    }

    /// The field `(t, x) ↦ g(t + t0, x + x0)`.
    pub fn translated(&self, t0: f64, x0: &[f64]) -> Self {
        let modes = self
            .modes
            .iter()
            .map(|m| {
                let mut s = m.kt as f64 * t0;
                for (k, xi) in m.kx.iter().zip(x0) {
                    s += *k as f64 * xi;
                }
                Mode {
                    phase: wrap_phase(m.phase + TAU * (s - s.floor())),
                    ..m.clone()
                }
            })
            .collect();
        Self {
            offset: self.offset,
            modes,
        }
    }

    /// Time average `∫₀¹ g(t, x) dt`: drops every mode with `kt ≠ 0`.
    pub fn time_average(&self) -> Self {
        Self {
            offset: self.offset,
            modes: self.modes.iter().filter(|m| m.kt == 0).cloned().collect(),
        }
    }

    /// Multiplies by a constant.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            offset: self.offset * factor,
            modes: self
                .modes
                .iter()
                .map(|m| Mode {
                    amp: m.amp * factor,
                    ..m.clone()
                })
                .collect(),
        }
    }
}

pub(crate) fn wrap_phase(p: f64) -> f64 {
    p.rem_euclid(TAU)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sine_helper_matches_closed_form() {
        let g = TrigField::spatial_sine(2.0, 1.0, vec![1]);
        for &x in &[0.0, 0.1, 0.25, 0.6, 0.75] {
            assert_abs_diff_eq!(g.eval(0.3, &[x]), 2.0 + (TAU * x).sin(), epsilon = 1e-14);
            assert_abs_diff_eq!(g.dx(0, 0.3, &[x]), TAU * (TAU * x).cos(), epsilon = 1e-12);
        }
    }

    #[test]
    fn unit_shift_is_exact() {
        let g = TrigField::constant(0.5)
            .with_mode(Mode::new(2, vec![1, -3], 0.7, 0.4))
            .with_mode(Mode::new(-1, vec![0, 2], 0.2, 1.9));
        let (t, x) = (0.3125, [0.125, 0.625]);
        assert_eq!(g.eval(t, &x), g.eval(t + 1.0, &[x[0] + 1.0, x[1]]));
        assert_eq!(g.eval(t, &x), g.eval(t, &[x[0], x[1] + 1.0]));
    }

    #[test]
    fn translation_moves_the_field() {
        let g = TrigField::constant(0.0).with_mode(Mode::new(1, vec![2], 1.0, 0.3));
        let h = g.translated(0.2, &[0.15]);
        assert_abs_diff_eq!(h.eval(0.1, &[0.4]), g.eval(0.3, &[0.55]), epsilon = 1e-13);
    }

    #[test]
    fn time_average_drops_time_modes() {
        let g = TrigField::constant(2.0)
            .with_mode(Mode::new(1, vec![1], 1.0, 0.0))
            .with_mode(Mode::new(0, vec![1], 0.5, 0.0));
        let avg = g.time_average();
        assert_eq!(avg.modes.len(), 1);
        assert!(avg.is_time_independent());
        assert!(!g.is_time_independent());
    }
}
