//! Resolvent (corrector) equations on the space-time torus and the
//! effective coefficients assembled from their solutions.

mod grid;
mod operator;

pub use grid::{DiscreteField, TorusGrid};
pub use operator::{DiscreteMedium, ResolventOperator, TimeLine};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{Environment, EvalScratch};
use crate::krylov::{self, Jacobi, KrylovOptions, KrylovOutcome, LinearOperator};
use crate::sde::{Regime, ScalingExponents};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CorrectorError {
    #[error("corrector grids support d = 1 or 2, got {0}")]
    UnsupportedDimension(usize),
    #[error("grid has {grid} spatial axes, environment has {environment}")]
    DimensionMismatch { grid: usize, environment: usize },
    #[error("axis {axis} has {nodes} nodes, needs at least {required}")]
    GridTooCoarse {
        axis: String,
        nodes: usize,
        required: usize,
    },
    #[error("invalid lambda schedule: {0}")]
    InvalidSchedule(String),
    #[error("Krylov solve stopped at relative residual {residual:e} after {iterations} iterations")]
    SolverDivergence {
        residual: f64,
        iterations: usize,
        history: Vec<f64>,
    },
    #[error("lambda-weighted norm did not decrease ({initial:e} -> {last:e})")]
    NoTrend { initial: f64, last: f64 },
}

impl CorrectorError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::UnsupportedDimension(_) => "UnsupportedDimension",
            Self::DimensionMismatch { .. } => "DimensionMismatch",
            Self::GridTooCoarse { .. } => "GridTooCoarse",
            Self::InvalidSchedule(_) => "InvalidSchedule",
            Self::SolverDivergence { .. } => "SolverDivergence",
            Self::NoTrend { .. } => "NoTrend",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreconditionerKind {
    Jacobi,
    TimeLine,
    /// Time-line when the time coupling dominates the diagonal.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub preconditioner: PreconditionerKind,
    /// Coefficient `δ` of the optional `(δ/2) D_t²` stabilizer.
    pub stabilizer: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 20_000,
            preconditioner: PreconditionerKind::Auto,
            stabilizer: 0.0,
        }
    }
}

/// The default schedule `λ_k = 2^{-k}`, `k = 2..=10`.
pub fn default_schedule() -> Vec<f64> {
    (2..=10).map(|k| 2f64.powi(-k)).collect()
}

/// Solves `op u = rhs` to relative residual `opts.tol`, starting from `x0`.
pub fn solve_resolvent(
    op: &ResolventOperator<'_>,
    rhs: &[f64],
    x0: Option<&[f64]>,
    opts: &SolveOptions,
) -> Result<(Vec<f64>, KrylovOutcome), CorrectorError> {
    let mut x = match x0 {
        Some(v) => v.to_vec(),
        None => vec![0.0; op.len()],
    };
    let kopts = KrylovOptions {
        tol: opts.tol,
        max_iter: opts.max_iter,
        restart: 60,
    };
    let use_line = match opts.preconditioner {
        PreconditionerKind::Jacobi => false,
        PreconditionerKind::TimeLine => true,
        PreconditionerKind::Auto => {
            let diag = op.diagonal();
            let mean = diag.iter().sum::<f64>() / diag.len() as f64;
            op.theta / (2.0 * op.medium.grid().dt()) >= 0.25 * mean
        }
    };
    let out = match TimeLine::new(op).filter(|_| use_line) {
        Some(line) => krylov::solve(op, &line, rhs, &mut x, &kopts),
        None => krylov::solve(op, &Jacobi::new(&op.diagonal()), rhs, &mut x, &kopts),
    };
    if !out.converged {
        let mut history = out.history;
        if history.len() > 64 {
            history = history.split_off(history.len() - 64);
        }
        return Err(CorrectorError::SolverDivergence {
            residual: out.residual,
            iterations: out.iterations,
            history,
        });
    }
    Ok((x, out))
}

/// Per-λ record of the continuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaDiagnostics {
    pub lambda: f64,
    pub theta: f64,
    /// `λ Σ ‖u‖²_π` over all right-hand sides.
    pub lambda_norm2: f64,
    /// `Σ ½⟨ã∇u, ∇u⟩_π` over all right-hand sides.
    pub dirichlet: f64,
    /// `‖ξ(λ) − ξ(λ_prev)‖_π`, absent for the first λ.
    pub cauchy_gap: Option<f64>,
    /// Smallest `⟨rhs,u⟩ − λ‖u‖² − m‖u‖₁²` over the right-hand sides.
    pub coercivity_slack: f64,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectorMethod {
    Continuation,
    SliceElliptic,
    TimeAveraged,
}

/// Discrete correctors for the drift components and for `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectorSolution {
    pub method: CorrectorMethod,
    pub grid: TorusGrid,
    pub lambda: f64,
    pub theta: f64,
    /// `u[i]` solves the resolvent equation with right-hand side `b_i`.
    pub u: Vec<DiscreteField>,
    /// Solution with right-hand side `c`.
    pub c: DiscreteField,
    /// `ξ_i = σᵀ∇u_i` at cell centres, `[t][cell][k]`.
    pub xi: Vec<Vec<f64>>,
    /// `κ = σᵀ∇c_λ` at cell centres.
    pub kappa: Vec<f64>,
    pub diagnostics: Vec<LambdaDiagnostics>,
}

fn drift_fields(env: &Environment, grid: &TorusGrid, times: &[f64]) -> Vec<Vec<f64>> {
    let d = grid.dimension();
    let ns = grid.n_space();
    let mut out = vec![vec![0.0; times.len() * ns]; d];
    let mut s = EvalScratch::new(d);
    let mut b = vec![0.0; d];
    let mut x = vec![0.0; d];
    for (i, t) in times.iter().enumerate() {
        for n in 0..ns {
            grid.node(n, &mut x);
            env.drift_into(*t, &x, &mut s, &mut b);
            for k in 0..d {
                out[k][i * ns + n] = b[k];
            }
        }
    }
    out
}

fn c_field(env: &Environment, grid: &TorusGrid, times: &[f64]) -> Vec<f64> {
    let d = grid.dimension();
    let ns = grid.n_space();
    let mut out = vec![0.0; times.len() * ns];
    if !env.has_c() {
        return out;
    }
    let mut s = EvalScratch::new(d);
    let mut x = vec![0.0; d];
    for (i, t) in times.iter().enumerate() {
        for n in 0..ns {
            grid.node(n, &mut x);
            out[i * ns + n] = env.c_value(*t, &x, &mut s);
        }
    }
    out
}

/// `σᵀ ∇_h u` at the cell centres.
fn sigma_gradient(medium: &DiscreteMedium, u: &[f64]) -> Vec<f64> {
    let grid = medium.grid();
    let (d, ns) = (grid.dimension(), grid.n_space());
    let dd = d * d;
    let mut g = vec![0.0; ns * d];
    let mut xi = vec![0.0; grid.len() * d];
    for i in 0..grid.n_t {
        medium.gradient(&u[i * ns..(i + 1) * ns], &mut g);
        for c in 0..ns {
            let s = &medium.sigma_center[(i * ns + c) * dd..(i * ns + c + 1) * dd];
            for k in 0..d {
                xi[(i * ns + c) * d + k] = (0..d).map(|l| s[l * d + k] * g[c * d + l]).sum();
            }
        }
    }
    xi
}

/// `‖ξ − η‖_π` for centre fields.
fn center_distance(medium: &DiscreteMedium, a: &[f64], b: &[f64]) -> f64 {
    let grid = medium.grid();
    let (d, ns) = (grid.dimension(), grid.n_space());
    let mut acc = 0.0;
    for i in 0..grid.n_t {
        for c in 0..ns {
            let off = (i * ns + c) * d;
            let q: f64 = (0..d).map(|k| (a[off + k] - b[off + k]).powi(2)).sum();
            acc += medium.w_center[c] * q;
        }
    }
    (acc / (medium.z * grid.len() as f64)).sqrt()
}

struct Solved {
    u: Vec<f64>,
    outcome: KrylovOutcome,
    slack: f64,
}

fn solve_all(
    op: &ResolventOperator<'_>,
    rhs: &[Vec<f64>],
    warm: &[Vec<f64>],
    opts: &SolveOptions,
) -> Result<Vec<Solved>, CorrectorError> {
    let m = op.medium.m;
    rhs.par_iter()
        .zip(warm.par_iter())
        .map(|(r, w)| {
            let (u, outcome) = solve_resolvent(op, r, Some(w), opts)?;
            let slack = op.medium.inner(r, &u) - op.lambda * op.medium.inner(&u, &u) - m * op.medium.dirichlet(&u);
            Ok(Solved { u, outcome, slack })
        })
        .collect()
}

fn check_schedule(schedule: &[f64]) -> Result<(), CorrectorError> {
    if schedule.is_empty() {
        return Err(CorrectorError::InvalidSchedule("empty".into()));
    }
    if schedule.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(CorrectorError::InvalidSchedule("values must be positive".into()));
    }
    if schedule.windows(2).any(|w| w[1] >= w[0]) {
        return Err(CorrectorError::InvalidSchedule("values must decrease".into()));
    }
    Ok(())
}

/// Solves `λu − L_h u − θ(λ) D_t u = rhs` for `rhs ∈ {b_1, …, b_d, c}` along
/// a decreasing λ schedule, warm-starting each solve from the previous λ.
pub fn lambda_continuation(
    env: &Environment,
    grid: &TorusGrid,
    scaling: ScalingExponents,
    schedule: &[f64],
    opts: &SolveOptions,
) -> Result<CorrectorSolution, CorrectorError> {
    grid.check(env)?;
    check_schedule(schedule)?;
    let medium = DiscreteMedium::new(env, grid);
    let times = medium.times.clone();
    let d = grid.dimension();
    let mut rhs = drift_fields(env, grid, &times);
    rhs.push(c_field(env, grid, &times));
    let mut warm = vec![vec![0.0; grid.len()]; d + 1];
    let mut prev_xi: Option<Vec<Vec<f64>>> = None;
    let mut diagnostics = Vec::with_capacity(schedule.len());
    let mut theta = 0.0;
    for &lambda in schedule {
        theta = scaling.theta(lambda);
        let op = ResolventOperator {
            medium: &medium,
            lambda,
            theta,
            delta: opts.stabilizer,
            pin_mean: false,
        };
        let solved = solve_all(&op, &rhs, &warm, opts)?;
        let xi: Vec<Vec<f64>> = solved.iter().map(|s| sigma_gradient(&medium, &s.u)).collect();
        let cauchy_gap = prev_xi.as_ref().map(|p| {
            p.iter()
                .zip(&xi)
                .map(|(a, b)| center_distance(&medium, a, b).powi(2))
                .sum::<f64>()
                .sqrt()
        });
        diagnostics.push(LambdaDiagnostics {
            lambda,
            theta,
            lambda_norm2: solved.iter().map(|s| lambda * medium.inner(&s.u, &s.u)).sum(),
            dirichlet: solved.iter().map(|s| medium.dirichlet(&s.u)).sum(),
            cauchy_gap,
            coercivity_slack: solved.iter().map(|s| s.slack).fold(f64::INFINITY, f64::min),
            iterations: solved.iter().map(|s| s.outcome.iterations).sum(),
            residual: solved.iter().map(|s| s.outcome.residual).fold(0.0, f64::max),
        });
        warm = solved.into_iter().map(|s| s.u).collect();
        prev_xi = Some(xi);
    }
    let first = diagnostics[0].lambda_norm2;
    let last = diagnostics[diagnostics.len() - 1].lambda_norm2;
    if diagnostics.len() > 1 && first > 1e-300 && last >= first {
        return Err(CorrectorError::NoTrend { initial: first, last });
    }
    let xi_all = prev_xi.expect("schedule is non-empty");
    let c = warm.pop().expect("c solution present");
    let kappa = xi_all[d].clone();
    Ok(CorrectorSolution {
        method: CorrectorMethod::Continuation,
        grid: grid.clone(),
        lambda: *schedule.last().expect("non-empty"),
        theta,
        u: warm
            .into_iter()
            .map(|values| DiscreteField {
                grid: grid.clone(),
                values,
            })
            .collect(),
        c: DiscreteField {
            grid: grid.clone(),
            values: c,
        },
        xi: xi_all[..d].to_vec(),
        kappa,
        diagnostics,
    })
}

fn subtract_pi_mean(medium: &DiscreteMedium, v: &mut [f64]) {
    let m = medium.mean(v);
    v.iter_mut().for_each(|x| *x -= m);
}

/// Solves `−L_h u = rhs − π(rhs)` with `π(u) = 0` on one medium.
fn elliptic_limit(
    medium: &DiscreteMedium,
    rhs: &[Vec<f64>],
    opts: &SolveOptions,
) -> Result<Vec<Vec<f64>>, CorrectorError> {
    let op = ResolventOperator {
        medium,
        lambda: 0.0,
        theta: 0.0,
        delta: 0.0,
        pin_mean: true,
    };
    let jopts = SolveOptions {
        preconditioner: PreconditionerKind::Jacobi,
        ..*opts
    };
    rhs.par_iter()
        .map(|r| {
            let mut r = r.clone();
            subtract_pi_mean(medium, &mut r);
            let (mut u, _) = solve_resolvent(&op, &r, None, &jopts)?;
            subtract_pi_mean(medium, &mut u);
            Ok(u)
        })
        .collect()
}

fn limit_solution(
    method: CorrectorMethod,
    grid: &TorusGrid,
    medium: &DiscreteMedium,
    mut fields: Vec<Vec<f64>>,
) -> CorrectorSolution {
    let d = grid.dimension();
    let xi: Vec<Vec<f64>> = fields.iter().map(|u| sigma_gradient(medium, u)).collect();
    let c = fields.pop().expect("c solution present");
    CorrectorSolution {
        method,
        grid: grid.clone(),
        lambda: 0.0,
        theta: match method {
            CorrectorMethod::TimeAveraged => f64::INFINITY,
            _ => 0.0,
        },
        u: fields
            .into_iter()
            .map(|values| DiscreteField {
                grid: grid.clone(),
                values,
            })
            .collect(),
        c: DiscreteField {
            grid: grid.clone(),
            values: c,
        },
        kappa: xi[d].clone(),
        xi: xi[..d].to_vec(),
        diagnostics: Vec::new(),
    }
}

/// The `θ → 0` limit: one elliptic problem per time slice, time entering
/// only as a parameter.
pub fn slice_elliptic_limit(
    env: &Environment,
    grid: &TorusGrid,
    opts: &SolveOptions,
) -> Result<CorrectorSolution, CorrectorError> {
    grid.check(env)?;
    let d = grid.dimension();
    let ns = grid.n_space();
    let mut fields = vec![vec![0.0; grid.len()]; d + 1];
    for i in 0..grid.n_t {
        let t = grid.time(i);
        let slice = DiscreteMedium::at_times(env, grid, vec![t]);
        let mut rhs = drift_fields(env, grid, &[t]);
        rhs.push(c_field(env, grid, &[t]));
        let sol = elliptic_limit(&slice, &rhs, opts)?;
        for (field, s) in fields.iter_mut().zip(sol) {
            field[i * ns..(i + 1) * ns].copy_from_slice(&s);
        }
    }
    let medium = DiscreteMedium::new(env, grid);
    Ok(limit_solution(CorrectorMethod::SliceElliptic, grid, &medium, fields))
}

/// The `θ → ∞` limit: every field is replaced by its time average and one
/// elliptic problem is solved. The returned grid has a single time slice.
pub fn time_averaged_limit(
    env: &Environment,
    grid: &TorusGrid,
    opts: &SolveOptions,
) -> Result<CorrectorSolution, CorrectorError> {
    grid.check(env)?;
    let avg = env.time_averaged();
    let flat = TorusGrid::new(1, grid.n_x.clone());
    let medium = DiscreteMedium::new(&avg, &flat);
    let mut rhs = drift_fields(&avg, &flat, &[0.0]);
    rhs.push(c_field(&avg, &flat, &[0.0]));
    let fields = elliptic_limit(&medium, &rhs, opts)?;
    Ok(limit_solution(CorrectorMethod::TimeAveraged, &flat, &medium, fields))
}

/// Effective limit coefficients `A` (d×d, row-major), `C`, `U`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveCoefficients {
    pub dimension: usize,
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    #[serde(rename = "C")]
    pub c: Vec<f64>,
    #[serde(rename = "U")]
    pub u: f64,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub solver: String,
    pub grid: TorusGrid,
    pub lambda_final: f64,
}

impl EffectiveCoefficients {
    /// Coefficients of a medium with no multiscale structure.
    pub fn explicit(a: Vec<f64>, c: Vec<f64>, u: f64) -> Self {
        let dimension = c.len();
        Self {
            dimension,
            a,
            c,
            u,
            provenance: Provenance {
                solver: "explicit".into(),
                grid: TorusGrid::new(0, Vec::new()),
                lambda_final: 0.0,
            },
        }
    }

    pub fn a_eigenvalues(&self) -> Vec<f64> {
        crate::linalg::sym_eigenvalues(self.dimension, &self.a)
    }
}

/// π-averages `A = ∫(I+J) a (I+J)ᵀ`, `C = ∫(I+J) a ∇c_λ`,
/// `U = ∫ ½∇c_λᵀ a ∇c_λ + d`, with `J_ij = ∂_j u_i`.
pub fn effective_coefficients(env: &Environment, sol: &CorrectorSolution) -> EffectiveCoefficients {
    let averaged;
    let env = match sol.method {
        CorrectorMethod::TimeAveraged => {
            averaged = env.time_averaged();
            &averaged
        }
        _ => env,
    };
    let grid = &sol.grid;
    let medium = DiscreteMedium::new(env, grid);
    let (d, ns) = (grid.dimension(), grid.n_space());
    let dd = d * d;
    let norm = 1.0 / (medium.z * grid.len() as f64);
    let mut a_eff = vec![0.0; dd];
    let mut c_eff = vec![0.0; d];
    let mut u_eff = 0.0;
    let mut grads = vec![vec![0.0; ns * d]; d];
    let mut gc = vec![0.0; ns * d];
    let mut ij = vec![0.0; dd];
    let mut agc = vec![0.0; d];
    for i in 0..grid.n_t {
        for (g, u) in grads.iter_mut().zip(&sol.u) {
            medium.gradient(&u.values[i * ns..(i + 1) * ns], g);
        }
        medium.gradient(&sol.c.values[i * ns..(i + 1) * ns], &mut gc);
        for cell in 0..ns {
            let w = medium.w_center[cell] * norm;
            let a = &medium.a_center[(i * ns + cell) * dd..(i * ns + cell + 1) * dd];
            for r in 0..d {
                for s in 0..d {
                    ij[r * d + s] = if r == s { 1.0 } else { 0.0 } + grads[r][cell * d + s];
                }
            }
            for r in 0..d {
                agc[r] = (0..d).map(|s| a[r * d + s] * gc[cell * d + s]).sum();
            }
            for r in 0..d {
                for s in 0..d {
                    let mut acc = 0.0;
                    for p in 0..d {
                        for q in 0..d {
                            acc += ij[r * d + p] * a[p * d + q] * ij[s * d + q];
                        }
                    }
                    a_eff[r * d + s] += w * acc;
                }
                c_eff[r] += w * (0..d).map(|p| ij[r * d + p] * agc[p]).sum::<f64>();
            }
            u_eff += w * 0.5 * (0..d).map(|p| gc[cell * d + p] * agc[p]).sum::<f64>();
        }
    }
    let d_field = DiscreteField::sample(grid, |t, x| env.d_value(t, x));
    u_eff += medium.mean(&d_field.values);
    for r in 0..d {
        for s in r + 1..d {
            let m = 0.5 * (a_eff[r * d + s] + a_eff[s * d + r]);
            a_eff[r * d + s] = m;
            a_eff[s * d + r] = m;
        }
    }
    EffectiveCoefficients {
        dimension: d,
        a: a_eff,
        c: c_eff,
        u: u_eff,
        provenance: Provenance {
            solver: match sol.method {
                CorrectorMethod::Continuation => "continuation",
                CorrectorMethod::SliceElliptic => "slice_elliptic",
                CorrectorMethod::TimeAveraged => "time_averaged",
            }
            .into(),
            grid: grid.clone(),
            lambda_final: sol.lambda,
        },
    }
}

/// Continuation with the `(δ/2) D_t²` stabilizer at `δ` and `δ/2`, combined
/// by two-point Richardson extrapolation `2 A(δ/2) − A(δ)`.
pub fn stabilized_effective(
    env: &Environment,
    grid: &TorusGrid,
    scaling: ScalingExponents,
    schedule: &[f64],
    delta: f64,
    opts: &SolveOptions,
) -> Result<EffectiveCoefficients, CorrectorError> {
    let run = |delta: f64| -> Result<EffectiveCoefficients, CorrectorError> {
        let o = SolveOptions {
            stabilizer: delta,
            ..*opts
        };
        let sol = lambda_continuation(env, grid, scaling, schedule, &o)?;
        Ok(effective_coefficients(env, &sol))
    };
    let coarse = run(delta)?;
    let mut fine = run(0.5 * delta)?;
    for (f, c) in fine.a.iter_mut().zip(&coarse.a) {
        *f = 2.0 * *f - c;
    }
    for (f, c) in fine.c.iter_mut().zip(&coarse.c) {
        *f = 2.0 * *f - c;
    }
    fine.u = 2.0 * fine.u - coarse.u;
    fine.provenance.solver = "continuation_richardson".into();
    Ok(fine)
}

/// Which solver a regime calls for when the limit is taken directly.
pub fn limit_for_regime(
    env: &Environment,
    grid: &TorusGrid,
    scaling: ScalingExponents,
    opts: &SolveOptions,
) -> Result<CorrectorSolution, CorrectorError> {
    match scaling.regime() {
        Regime::Sub => slice_elliptic_limit(env, grid, opts),
        Regime::Super => time_averaged_limit(env, grid, opts),
        Regime::Critical => lambda_continuation(env, grid, scaling, &default_schedule(), opts),
    }
}
