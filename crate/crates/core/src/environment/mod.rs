//! Stationary space-time coefficient fields and their validation.

pub mod presets;
mod spec;
mod validate;

pub use spec::{EnvironmentDocument, EnvironmentSpec, StructuralConstants};
pub use validate::{BoundKind, BoundReport, ValidationGrid};

use crate::linalg::{psd_sqrt, psd_sqrt_derivative};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvironmentError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid JSON environment: {0}")]
    Json(String),
    #[error("constant {name} = {value} must be positive and finite")]
    InvalidConstant { name: String, value: f64 },
    #[error("validation grid axis {axis} has {resolution} nodes, needs at least {required}")]
    UnderResolvedGrid {
        axis: String,
        resolution: usize,
        required: usize,
    },
    #[error("{field} has time-dependent modes")]
    TimeDependenceViolation { field: String },
    #[error("{field}[{i}][{j}] is not symmetric at t={t}, x={x:?} (gap {gap:e})")]
    SymmetryViolation {
        field: String,
        i: usize,
        j: usize,
        t: f64,
        x: Vec<f64>,
        gap: f64,
    },
    #[error("H[{i}][{j}] is not antisymmetric at t={t}, x={x:?} (gap {gap:e})")]
    AntisymmetryViolation {
        i: usize,
        j: usize,
        t: f64,
        x: Vec<f64>,
        gap: f64,
    },
    #[error("{field} is not positive semidefinite at t={t}, x={x:?} (min eigenvalue {min_eigenvalue:e})")]
    PsdViolation {
        field: String,
        t: f64,
        x: Vec<f64>,
        min_eigenvalue: f64,
    },
    #[error("{0}")]
    BoundViolation(Box<BoundReport>),
}

impl EnvironmentError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::DimensionMismatch(_) => "DimensionMismatch",
            Self::Json(_) => "InvalidJson",
            Self::InvalidConstant { .. } => "InvalidConstant",
            Self::UnderResolvedGrid { .. } => "UnderResolvedGrid",
            Self::TimeDependenceViolation { .. } => "TimeDependenceViolation",
            Self::SymmetryViolation { .. } => "SymmetryViolation",
            Self::AntisymmetryViolation { .. } => "AntisymmetryViolation",
            Self::PsdViolation { .. } => "PSDViolation",
            Self::BoundViolation(_) => "BoundViolation",
        }
    }
}

/// Pointwise coefficient values, matrices row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub a: Vec<f64>,
    pub sigma: Vec<f64>,
    pub a_tilde: Vec<f64>,
    pub sigma_tilde: Vec<f64>,
    pub h: Vec<f64>,
    pub v: f64,
    pub grad_v: Vec<f64>,
    pub b: Vec<f64>,
    pub c: f64,
    pub d: f64,
}

/// Reusable buffers for allocation-free evaluation in hot loops.
#[derive(Debug, Clone)]
pub struct EvalScratch {
    a: Vec<f64>,
    grad: Vec<f64>,
    dv: Vec<f64>,
    at: Vec<f64>,
    dat: Vec<f64>,
    st: Vec<f64>,
    dst: Vec<f64>,
    fv: Vec<f64>,
    df: Vec<f64>,
}

impl EvalScratch {
    pub fn new(d: usize) -> Self {
        Self {
            a: vec![0.0; d * d],
            grad: vec![0.0; d],
            dv: vec![0.0; d],
            at: vec![0.0; d * d],
            dat: vec![0.0; d * d * d],
            st: vec![0.0; d * d],
            dst: vec![0.0; d * d],
            fv: vec![0.0; d],
            df: vec![0.0; d * d],
        }
    }
}

/// A validated environment. Immutable; evaluation is pure.
#[derive(Debug, Clone)]
pub struct Environment {
    spec: EnvironmentSpec,
    z: f64,
    a_live: Vec<bool>,
    h_live: Vec<bool>,
    has_v: bool,
    has_f: bool,
    has_d: bool,
    a_tilde_constant: bool,
}

impl Environment {
    /// Validates `spec` on `grid` (or a default grid tied to the spec's
    /// wavenumbers) and precomputes the normalization `Z`.
    pub fn build(spec: EnvironmentSpec, grid: Option<&ValidationGrid>) -> Result<Self, EnvironmentError> {
        spec.check_shapes()?;
        let default_grid;
        let grid = match grid {
            Some(g) => g,
            None => {
                default_grid = ValidationGrid::for_spec(&spec);
                &default_grid
            }
        };
        let env = Self::assemble(spec);
        validate::validate(&env, grid)?;
        Ok(env)
    }

    /// Builds without pointwise validation. Shapes are still checked.
    pub fn build_unchecked(spec: EnvironmentSpec) -> Result<Self, EnvironmentError> {
        spec.check_shapes()?;
        Ok(Self::assemble(spec))
    }

    fn assemble(spec: EnvironmentSpec) -> Self {
        let a_live = spec.a.iter().map(|g| !g.is_zero()).collect();
        let h_live = spec.h.iter().map(|g| !g.is_zero()).collect();
        let has_v = !spec.v.is_constant();
        let has_f = spec.f.iter().any(|g| !g.is_zero());
        let has_d = !spec.d.is_zero();
        let a_tilde_constant = spec.a_tilde.iter().all(|g| g.is_constant());
        let mut env = Self {
            spec,
            z: 1.0,
            a_live,
            h_live,
            has_v,
            has_f,
            has_d,
            a_tilde_constant,
        };
        env.z = env.compute_z();
        env
    }

    fn compute_z(&self) -> f64 {
        if !self.has_v {
            return (-2.0 * self.spec.v.offset).exp();
        }
        let d = self.dimension();
        let kmax = (0..d).map(|i| self.spec.v.max_abs_kx(i)).max().unwrap_or(0) as usize;
        let floor = if d <= 2 { 64 } else { 16 };
        let n = (4 * kmax + 2).max(floor);
        let total = n.pow(d as u32);
        let mut x = vec![0.0; d];
        let mut acc = 0.0;
        for flat in 0..total {
            let mut r = flat;
            for xi in x.iter_mut() {
                *xi = (r % n) as f64 / n as f64;
                r /= n;
            }
            acc += (-2.0 * self.spec.v.eval(0.0, &x)).exp();
        }
        acc / total as f64
    }

    pub fn dimension(&self) -> usize {
        self.spec.dimension
    }

    pub fn spec(&self) -> &EnvironmentSpec {
        &self.spec
    }

    pub fn constants(&self) -> &StructuralConstants {
        &self.spec.constants
    }

    /// `Z = ∫ e^{-2V}` over the unit torus.
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn has_stream(&self) -> bool {
        self.h_live.iter().any(|l| *l)
    }

    pub fn has_potential(&self) -> bool {
        self.has_v
    }

    pub fn has_c(&self) -> bool {
        self.has_f
    }

    pub fn has_d(&self) -> bool {
        self.has_d
    }

    pub fn is_time_independent(&self) -> bool {
        self.spec.is_time_independent()
    }

    /// Environment seen from `(t0, x0)`. `Z` is invariant under shifts.
    pub fn translated(&self, t0: f64, x0: &[f64]) -> Self {
        Self {
            spec: self.spec.translated(t0, x0),
            ..self.clone()
        }
    }

    /// Every field replaced by its average over one time period.
    pub fn time_averaged(&self) -> Self {
        let mut spec = self.spec.clone();
        for f in spec.fields_mut() {
            *f = f.time_average();
        }
        Self::assemble(spec)
    }

    pub fn a_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        for (k, g) in self.spec.a.iter().enumerate() {
            out[k] = if self.a_live[k] { g.eval(t, x) } else { 0.0 };
        }
    }

    pub fn a_tilde_into(&self, x: &[f64], out: &mut [f64]) {
        for (k, g) in self.spec.a_tilde.iter().enumerate() {
            out[k] = g.eval(0.0, x);
        }
    }

    pub fn h_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        for (k, g) in self.spec.h.iter().enumerate() {
            out[k] = if self.h_live[k] { g.eval(t, x) } else { 0.0 };
        }
    }

    pub fn v(&self, x: &[f64]) -> f64 {
        self.spec.v.eval(0.0, x)
    }

    /// `e^{-2V(x)}/Z`, the density of the invariant measure.
    pub fn pi_density(&self, x: &[f64]) -> f64 {
        (-2.0 * self.v(x)).exp() / self.z
    }

    pub fn d_value(&self, t: f64, x: &[f64]) -> f64 {
        if self.has_d {
            self.spec.d.eval(t, x)
        } else {
            0.0
        }
    }

    pub fn sigma_into(&self, t: f64, x: &[f64], scratch: &mut EvalScratch, out: &mut [f64]) {
        self.a_into(t, x, &mut scratch.a);
        psd_sqrt(self.dimension(), &scratch.a, out);
    }

    /// Drift `b` and diffusion `σ` at one point, sharing the evaluation of `a`.
    pub fn drift_and_sigma(&self, t: f64, x: &[f64], scratch: &mut EvalScratch, b: &mut [f64], sigma: &mut [f64]) {
        self.drift_inner(t, x, scratch, b);
        psd_sqrt(self.dimension(), &scratch.a, sigma);
    }

    pub fn drift_into(&self, t: f64, x: &[f64], scratch: &mut EvalScratch, b: &mut [f64]) {
        self.drift_inner(t, x, scratch, b);
    }

    // b_i = Σ_j ½ ∂_j a_ij − a_ij ∂_j V + ½ ∂_j H_ij. Leaves `a` in scratch.
    fn drift_inner(&self, t: f64, x: &[f64], s: &mut EvalScratch, b: &mut [f64]) {
        let d = self.dimension();
        b.iter_mut().for_each(|v| *v = 0.0);
        if self.has_v {
            self.spec.v.eval_with_grad(0.0, x, &mut s.dv);
        }
        for i in 0..d {
            for j in 0..d {
                let k = i * d + j;
                if !self.a_live[k] {
                    s.a[k] = 0.0;
                    continue;
                }
                let val = self.spec.a[k].eval_with_grad(t, x, &mut s.grad);
                s.a[k] = val;
                b[i] += 0.5 * s.grad[j];
                if self.has_v {
                    b[i] -= val * s.dv[j];
                }
            }
        }
        for i in 0..d {
            for j in 0..d {
                let k = i * d + j;
                if self.h_live[k] {
                    b[i] += 0.5 * self.spec.h[k].dx(j, t, x);
                }
            }
        }
    }

    /// `c = e^{2V} Σ_ij ∂_i(e^{-2V} σ̃_ij f_j)`, by exact differentiation.
    pub fn c_value(&self, t: f64, x: &[f64], s: &mut EvalScratch) -> f64 {
        if !self.has_f {
            return 0.0;
        }
        let d = self.dimension();
        if self.has_v {
            self.spec.v.eval_with_grad(0.0, x, &mut s.dv);
        } else {
            s.dv.iter_mut().for_each(|v| *v = 0.0);
        }
        for (k, g) in self.spec.a_tilde.iter().enumerate() {
            s.at[k] = g.eval_with_grad(0.0, x, &mut s.grad);
            for axis in 0..d {
                s.dat[axis * d * d + k] = s.grad[axis];
            }
        }
        psd_sqrt(d, &s.at, &mut s.st);
        for j in 0..d {
            s.fv[j] = self.spec.f[j].eval_with_grad(t, x, &mut s.grad);
            for i in 0..d {
                s.df[i * d + j] = s.grad[i];
            }
        }
        let mut c = 0.0;
        for i in 0..d {
            if !self.a_tilde_constant {
                psd_sqrt_derivative(d, &s.at, &s.dat[i * d * d..(i + 1) * d * d], &mut s.dst);
            }
            for j in 0..d {
                let st = s.st[i * d + j];
                let dst = if self.a_tilde_constant { 0.0 } else { s.dst[i * d + j] };
                c += dst * s.fv[j] + st * s.df[i * d + j] - 2.0 * s.dv[i] * st * s.fv[j];
            }
        }
        c
    }

    pub fn eval_coefficients(&self, t: f64, x: &[f64]) -> Coefficients {
        let d = self.dimension();
        let mut s = EvalScratch::new(d);
        let mut b = vec![0.0; d];
        let mut sigma = vec![0.0; d * d];
        self.drift_and_sigma(t, x, &mut s, &mut b, &mut sigma);
        let a = s.a.clone();
        let mut a_tilde = vec![0.0; d * d];
        self.a_tilde_into(x, &mut a_tilde);
        let mut sigma_tilde = vec![0.0; d * d];
        psd_sqrt(d, &a_tilde, &mut sigma_tilde);
        let mut h = vec![0.0; d * d];
        self.h_into(t, x, &mut h);
        let mut grad_v = vec![0.0; d];
        let v = self.spec.v.eval_with_grad(0.0, x, &mut grad_v);
        let c = self.c_value(t, x, &mut s);
        Coefficients {
            a,
            sigma,
            a_tilde,
            sigma_tilde,
            h,
            v,
            grad_v,
            b,
            c,
            d: self.d_value(t, x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn constant_environment_is_trivial() {
        let env = Environment::build(EnvironmentSpec::isotropic(1, 1.0), None).unwrap();
        let c = env.eval_coefficients(0.37, &[0.81]);
        assert_eq!(c.a, vec![1.0]);
        assert_eq!(c.sigma, vec![1.0]);
        assert_eq!(c.b, vec![0.0]);
        assert_eq!(c.c, 0.0);
        assert_eq!(env.z(), 1.0);
    }

    #[test]
    fn sine_medium_values() {
        let env = Environment::build(presets::sine_medium(), None).unwrap();
        let q = env.eval_coefficients(0.0, &[0.25]);
        assert_abs_diff_eq!(q.a[0], 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(q.sigma[0], 3f64.sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(q.b[0], 0.0, epsilon = 1e-13);
        let q0 = env.eval_coefficients(0.0, &[0.0]);
        assert_abs_diff_eq!(q0.b[0], std::f64::consts::PI, epsilon = 1e-13);
    }
}
