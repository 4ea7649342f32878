//! The homogenized limit `z̄(x,t) = e^{Ut} E[f(x + Ct + A^{1/2} B_t)]` and
//! its comparison with Monte Carlo Feynman–Kac estimates at finite `ε`.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corrector::EffectiveCoefficients;
use crate::environment::Environment;
use crate::linalg;
use crate::payoff::Payoff;
use crate::sde::{self, McParams, ScalingExponents, SdeError, DEFAULT_STEP_FACTOR};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EffectiveError {
    #[error("limit problem: {0}")]
    InvalidProblem(String),
    #[error("epsilon list must be non-empty and strictly decreasing")]
    InvalidEpsilonList,
    #[error(transparent)]
    Sde(#[from] SdeError),
}

impl EffectiveError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::InvalidProblem(_) => "InvalidProblem",
            Self::InvalidEpsilonList => "InvalidEpsilonList",
            Self::Sde(e) => e.kind(),
        }
    }
}

/// Constant-coefficient limit equation with its initial datum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitProblem {
    pub dimension: usize,
    /// Row-major, symmetric PSD.
    pub a: Vec<f64>,
    pub c: Vec<f64>,
    pub u: f64,
    pub payoff: Payoff,
}

impl LimitProblem {
    pub fn new(coeffs: &EffectiveCoefficients, payoff: Payoff) -> Result<Self, EffectiveError> {
        let prob = Self {
            dimension: coeffs.dimension,
            a: coeffs.a.clone(),
            c: coeffs.c.clone(),
            u: coeffs.u,
            payoff,
        };
        prob.check()?;
        Ok(prob)
    }

    pub fn check(&self) -> Result<(), EffectiveError> {
        let d = self.dimension;
        if self.a.len() != d * d || self.c.len() != d {
            return Err(EffectiveError::InvalidProblem(
                "coefficient shapes do not match the dimension".into(),
            ));
        }
        if !self.payoff.accepts_dimension(d) {
            return Err(EffectiveError::InvalidProblem("payoff dimension does not match".into()));
        }
        let scale = self.a.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..d {
            for j in 0..i {
                if (self.a[i * d + j] - self.a[j * d + i]).abs() > 1e-10 * scale {
                    return Err(EffectiveError::InvalidProblem("A is not symmetric".into()));
                }
            }
        }
        if linalg::min_eigenvalue(d, &self.a) < -1e-10 * scale {
            return Err(EffectiveError::InvalidProblem("A is not positive semidefinite".into()));
        }
        Ok(())
    }
}

/// Nodes and weights of the `n`-point rule for `E[g(Z)]`, `Z ~ N(0,1)`,
/// from the eigen-decomposition of the Hermite Jacobi matrix.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let n = n.max(1);
    let jac = DMatrix::from_fn(n, n, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Evaluates `z̄(x, t)`. Closed forms are used for the gaussian bump, cosine
/// and constant payoffs; other payoffs use tensor Gauss–Hermite quadrature
/// along the principal axes of `A`.
pub fn limit_solution(prob: &LimitProblem, x: &[f64], t: f64, n_quad: usize) -> f64 {
    let d = prob.dimension;
    let mean: Vec<f64> = (0..d).map(|i| x[i] + prob.c[i] * t).collect();
    let growth = (prob.u * t).exp();
    let cov: Vec<f64> = prob.a.iter().map(|v| v * t).collect();
    match &prob.payoff {
        Payoff::Constant { value } => growth * value,
        Payoff::GaussianBump { center, width, amp } => {
            // ∫ N(y; m, Σ) exp(−|y−c|²/2s²) dy
            let s2 = width * width;
            let mut m = DMatrix::from_row_slice(d, d, &cov);
            for i in 0..d {
                m[(i, i)] += s2;
            }
            let det_ratio = m.determinant() / s2.powi(d as i32);
            let r = nalgebra::DVector::from_iterator(d, (0..d).map(|i| mean[i] - center[i]));
            let q = match m.clone().cholesky() {
                Some(ch) => r.dot(&ch.solve(&r)),
                None => return growth * quadrature(prob, &mean, &cov, n_quad),
            };
            growth * amp * det_ratio.powf(-0.5) * (-0.5 * q).exp()
        }
        Payoff::Cosine { freq, phase, amp } => {
            let tau = std::f64::consts::TAU;
            let k_dot_m: f64 = freq.iter().zip(&mean).map(|(k, m)| k * m).sum();
            let mut kak = 0.0;
            for i in 0..d {
                for j in 0..d {
                    kak += freq[i] * cov[i * d + j] * freq[j];
                }
            }
            growth * amp * (tau * k_dot_m + phase).cos() * (-0.5 * tau * tau * kak).exp()
        }
        _ => growth * quadrature(prob, &mean, &cov, n_quad),
    }
}

/// Tensor Gauss–Hermite approximation of `E[f(m + Σ^{1/2} Z)]`.
pub fn quadrature(prob: &LimitProblem, mean: &[f64], cov: &[f64], n_quad: usize) -> f64 {
    let d = prob.dimension;
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(d, d, cov));
    let (nodes, weights) = gauss_hermite(n_quad);
    let n = nodes.len();
    let total = n.pow(d as u32);
    let mut y = vec![0.0; d];
    let mut acc = 0.0;
    for flat in 0..total {
        y.copy_from_slice(mean);
        let mut w = 1.0;
        let mut r = flat;
        for k in 0..d {
            let idx = r % n;
            r /= n;
            w *= weights[idx];
            let scale = eig.eigenvalues[k].max(0.0).sqrt() * nodes[idx];
            for (i, yi) in y.iter_mut().enumerate() {
                *yi += eig.eigenvectors[(i, k)] * scale;
            }
        }
        acc += w * prob.payoff.eval(&y);
    }
    acc
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub eps: f64,
    pub z_eps: f64,
    pub stderr: f64,
    pub z_bar: f64,
    pub gap: f64,
    /// Euler step actually used at this `ε`.
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub x: Vec<f64>,
    pub t: f64,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("eps,z_eps,stderr,z_bar,gap\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{},{}\n", r.eps, r.z_eps, r.stderr, r.z_bar, r.gap));
        }
        out
    }
}

/// Monte Carlo `z_ε(x, t)` against `z̄(x, t)` for each `ε`. The step is
/// `min(mc.h, c·min(ε^α, ε^{2β}))` with `c = step_factor ≤ ¼`, which keeps
/// the step fixed in fast units across the list.
#[allow(clippy::too_many_arguments)]
pub fn compare_homogenization(
    env: &Environment,
    scaling: ScalingExponents,
    eps_list: &[f64],
    prob: &LimitProblem,
    x: &[f64],
    t: f64,
    mc: &McParams,
    step_factor: f64,
) -> Result<ComparisonTable, EffectiveError> {
    prob.check()?;
    if !(step_factor > 0.0 && step_factor <= DEFAULT_STEP_FACTOR) {
        return Err(EffectiveError::InvalidProblem(format!(
            "step factor {step_factor} outside (0, 1/4]"
        )));
    }
    if eps_list.is_empty() || eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(EffectiveError::InvalidEpsilonList);
    }
    let z_bar = limit_solution(prob, x, t, 32);
    let rows = eps_list
        .par_iter()
        .map(|&eps| {
            let h = mc.h.min(scaling.max_step(eps, step_factor));
            let run = McParams { h, ..*mc };
            let est = sde::feynman_kac_estimate(env, scaling, eps, x, t, &prob.payoff, &run)?;
            Ok(ComparisonRow {
                eps,
                z_eps: est.mean,
                stderr: est.stderr,
                z_bar,
                gap: (est.mean - z_bar).abs(),
                h,
            })
        })
        .collect::<Result<Vec<_>, EffectiveError>>()?;
    Ok(ComparisonTable { x: x.to_vec(), t, rows })
}
