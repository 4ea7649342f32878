//! Effective diffusivity of one-dimensional periodic media in the three
//! scaling regimes.

use serde::{Deserialize, Serialize};

use crate::krylov::{gmres, KrylovOptions, LinearOperator, Preconditioner};
use crate::linalg::solve_cyclic_tridiagonal;
use crate::sde::Regime;
use crate::trig::TrigField;

/// Inner quadratures of `1/a` above this are treated as divergent.
const DIVERGENCE_THRESHOLD: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CellError {
    #[error("coefficient field is not one-dimensional")]
    NotOneDimensional,
    #[error("coefficient is negative ({min}) at t={t}, x={x}")]
    NegativeCoefficient { min: f64, t: f64, x: f64 },
    #[error("grid {n_t}x{n_x} is too coarse for the coefficient modes")]
    GridTooCoarse { n_t: usize, n_x: usize },
    #[error("space-time system is singular: {zero_faces} faces carry no flux at any time")]
    SingularSystem { zero_faces: usize },
    #[error("linear solver stopped at relative residual {residual:e} after {iterations} iterations")]
    SolverDivergence {
        residual: f64,
        iterations: usize,
        history: Vec<f64>,
    },
}

impl CellError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::NotOneDimensional => "NotOneDimensional",
            Self::NegativeCoefficient { .. } => "NegativeCoefficient",
            Self::GridTooCoarse { .. } => "GridTooCoarse",
            Self::SingularSystem { .. } => "SingularSystem",
            Self::SolverDivergence { .. } => "SolverDivergence",
        }
    }
}

/// A nonnegative coefficient `a(t, x)`, 1-periodic in both variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient1D {
    field: TrigField,
}

impl Coefficient1D {
    /// Checks nonnegativity on a fine sample grid.
    pub fn new(field: TrigField) -> Result<Self, CellError> {
        if !field.has_dimension(1) {
            return Err(CellError::NotOneDimensional);
        }
        let n_t = if field.is_time_independent() {
            1
        } else {
            (16 * field.max_abs_kt() as usize).max(64)
        };
        let n_x = (16 * field.max_abs_kx(0) as usize).max(256);
        let mut worst = (f64::INFINITY, 0.0, 0.0);
        for i in 0..n_t {
            let t = i as f64 / n_t as f64;
            for j in 0..n_x {
                let x = j as f64 / n_x as f64;
                let v = field.eval(t, &[x]);
                if v < worst.0 {
                    worst = (v, t, x);
                }
            }
        }
        let scale = field.sup_bound().max(1.0);
        if worst.0 < -1e-12 * scale {
            return Err(CellError::NegativeCoefficient {
                min: worst.0,
                t: worst.1,
                x: worst.2,
            });
        }
        Ok(Self { field })
    }

    pub fn field(&self) -> &TrigField {
        &self.field
    }

    pub fn eval(&self, t: f64, x: f64) -> f64 {
        self.field.eval(t, &[x]).max(0.0)
    }
}

/// Closed-form (quadrature) effective diffusivity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureResult {
    pub regime: Regime,
    #[serde(rename = "A")]
    pub a_eff: f64,
    /// Set when a harmonic mean collapsed because `1/a` is not integrable.
    pub degenerate: bool,
    pub n_quad: usize,
}

fn harmonic_mean(values: impl Iterator<Item = f64>, floor: f64) -> Option<f64> {
    let mut acc = 0.0;
    let mut n = 0usize;
    for v in values {
        if v <= floor {
            return None;
        }
        acc += 1.0 / v;
        n += 1;
    }
    let inner = acc / n as f64;
    if !inner.is_finite() || inner > DIVERGENCE_THRESHOLD {
        None
    } else {
        Some(1.0 / inner)
    }
}

fn floor_for(a: &Coefficient1D) -> f64 {
    1e-14 * a.field.sup_bound().max(1.0)
}

/// `A = ∫_t (∫_x a⁻¹ dx)⁻¹ dt`: time enters as a parameter.
pub fn effective_subcritical(a: &Coefficient1D, n_quad: usize) -> QuadratureResult {
    let n = n_quad.max(1);
    let floor = floor_for(a);
    let n_t = if a.field.is_time_independent() { 1 } else { n };
    let mut degenerate = false;
    let mut total = 0.0;
    for i in 0..n_t {
        let t = i as f64 / n_t as f64;
        match harmonic_mean((0..n).map(|j| a.eval(t, j as f64 / n as f64)), floor) {
            Some(h) => total += h,
            None => degenerate = true,
        }
    }
    QuadratureResult {
        regime: Regime::Sub,
        a_eff: total / n_t as f64,
        degenerate,
        n_quad: n,
    }
}

/// `A = (∫_x (∫_t a dt)⁻¹ dx)⁻¹`: the medium is first averaged in time.
pub fn effective_supercritical(a: &Coefficient1D, n_quad: usize) -> QuadratureResult {
    let n = n_quad.max(1);
    let floor = floor_for(a);
    let n_t = if a.field.is_time_independent() { 1 } else { n };
    let mean_t = |x: f64| (0..n_t).map(|i| a.eval(i as f64 / n_t as f64, x)).sum::<f64>() / n_t as f64;
    let (a_eff, degenerate) = match harmonic_mean((0..n).map(|j| mean_t(j as f64 / n as f64)), floor) {
        Some(h) => (h, false),
        None => (0.0, true),
    };
    QuadratureResult {
        regime: Regime::Super,
        a_eff,
        degenerate,
        n_quad: n,
    }
}

/// Solution of a cell problem on a `(t, x)` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSolution {
    pub regime: Regime,
    #[serde(rename = "A")]
    pub a_eff: f64,
    /// Corrector `v[i·n_x + j]` at `(i/n_t, j/n_x)`; empty for closed forms.
    pub corrector: Vec<f64>,
    /// Flux `a(∂_x v + 1)` at the cell faces, same layout as the corrector.
    pub flux: Vec<f64>,
    pub n_t: usize,
    pub n_x: usize,
    pub residual: f64,
    pub iterations: usize,
    pub degenerate: bool,
}

impl CellSolution {
    pub fn corrector_csv(&self) -> String {
        let mut out = String::from("t,x,v\n");
        for i in 0..self.n_t {
            for j in 0..self.n_x {
                out.push_str(&format!(
                    "{},{},{}\n",
                    i as f64 / self.n_t as f64,
                    j as f64 / self.n_x as f64,
                    self.corrector[i * self.n_x + j]
                ));
            }
        }
        out
    }
}

/// Discrete elliptic cell problem on one time slice with face coefficients
/// `af[j] = a(x_{j+½})`. Returns `(v, flux)` with `v` of zero mean. The
/// discrete flux `af·(Δv/Δx + 1)` is exactly constant.
fn elliptic_slice(af: &[f64], floor: f64) -> Option<(Vec<f64>, f64)> {
    let n = af.len();
    let flux = harmonic_mean(af.iter().copied(), floor)?;
    let dx = 1.0 / n as f64;
    let mut v = vec![0.0; n];
    for j in 1..n {
        v[j] = v[j - 1] + dx * (flux / af[j - 1] - 1.0);
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    v.iter_mut().for_each(|x| *x -= mean);
    Some((v, flux))
}

/// Subcritical cell problem solved slice by slice on an `n_t × n_x` grid,
/// with face-midpoint coefficients.
pub fn subcritical_cells(a: &Coefficient1D, n_t: usize, n_x: usize) -> CellSolution {
    let floor = floor_for(a);
    let mut corrector = vec![0.0; n_t * n_x];
    let mut flux = vec![0.0; n_t * n_x];
    let mut total = 0.0;
    let mut degenerate = false;
    for i in 0..n_t {
        let t = i as f64 / n_t as f64;
        let af: Vec<f64> = (0..n_x).map(|j| a.eval(t, (j as f64 + 0.5) / n_x as f64)).collect();
        match elliptic_slice(&af, floor) {
            Some((v, c)) => {
                corrector[i * n_x..(i + 1) * n_x].copy_from_slice(&v);
                flux[i * n_x..(i + 1) * n_x].iter_mut().for_each(|f| *f = c);
                total += c;
            }
            None => degenerate = true,
        }
    }
    CellSolution {
        regime: Regime::Sub,
        a_eff: total / n_t as f64,
        corrector,
        flux,
        n_t,
        n_x,
        residual: 0.0,
        iterations: 0,
        degenerate,
    }
}

/// The space-time system
/// `(v_i − v_{i−1})/Δt − ½ L_{i−½}(v_i + v_{i−1}) = s_{i−½}`
/// with `L w = D⁻(a D⁺ w)` at the half time level and `s = D⁻ a`.
struct SpaceTime {
    n_t: usize,
    n_x: usize,
    dt: f64,
    dx2: f64,
    /// `af[i·n_x + j] = a(t_i − Δt/2, x_j + Δx/2)`.
    af: Vec<f64>,
}

impl SpaceTime {
    fn l_apply(&self, i: usize, w: &[f64], out: &mut [f64]) {
        let n = self.n_x;
        let af = &self.af[i * n..(i + 1) * n];
        for j in 0..n {
            let jp = (j + 1) % n;
            let jm = (j + n - 1) % n;
            out[j] = (af[j] * (w[jp] - w[j]) - af[jm] * (w[j] - w[jm])) / self.dx2;
        }
    }

    fn rhs(&self) -> Vec<f64> {
        let n = self.n_x;
        let dx = self.dx2.sqrt();
        let mut s = vec![0.0; self.n_t * n];
        for i in 0..self.n_t {
            let af = &self.af[i * n..(i + 1) * n];
            for j in 0..n {
                s[i * n + j] = (af[j] - af[(j + n - 1) % n]) / dx;
            }
        }
        s
    }
}

impl LinearOperator for SpaceTime {
    fn len(&self) -> usize {
        self.n_t * self.n_x
    }

    fn apply(&self, v: &[f64], y: &mut [f64]) {
        let n = self.n_x;
        let mut avg = vec![0.0; n];
        let mut lv = vec![0.0; n];
        for i in 0..self.n_t {
            let ip = (i + self.n_t - 1) % self.n_t;
            let cur = &v[i * n..(i + 1) * n];
            let prev = &v[ip * n..(ip + 1) * n];
            for j in 0..n {
                avg[j] = 0.5 * (cur[j] + prev[j]);
            }
            self.l_apply(i, &avg, &mut lv);
            for j in 0..n {
                y[i * n + j] = (cur[j] - prev[j]) / self.dt - lv[j];
            }
        }
    }
}

/// One forward sweep in time, dropping the periodic wrap-around coupling.
struct ForwardSweep<'a> {
    sys: &'a SpaceTime,
}

impl Preconditioner for ForwardSweep<'_> {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let sys = self.sys;
        let n = sys.n_x;
        let (mut lower, mut diag, mut upper) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let mut rhs = vec![0.0; n];
        let mut lprev = vec![0.0; n];
        let mut sol = vec![0.0; n];
        for i in 0..sys.n_t {
            let af = &sys.af[i * n..(i + 1) * n];
            for j in 0..n {
                let jm = (j + n - 1) % n;
                lower[j] = -0.5 * af[jm] / sys.dx2;
                upper[j] = -0.5 * af[j] / sys.dx2;
                diag[j] = 1.0 / sys.dt + 0.5 * (af[j] + af[jm]) / sys.dx2;
            }
            rhs.copy_from_slice(&r[i * n..(i + 1) * n]);
            if i > 0 {
                let prev = &z[(i - 1) * n..i * n];
                sys.l_apply(i, prev, &mut lprev);
                for j in 0..n {
                    rhs[j] += prev[j] / sys.dt + 0.5 * lprev[j];
                }
            }
            solve_cyclic_tridiagonal(&lower, &diag, &upper, &rhs, &mut sol);
            z[i * n..(i + 1) * n].copy_from_slice(&sol);
        }
    }
}

fn subtract_mean(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

/// Parabolic cell problem `∂_t v − ∂_x(a(∂_x v + 1)) = 0` on the space-time
/// torus, solved as one linear system. Returns `A = ∫∫ a(∂_x v + 1)`.
pub fn effective_critical(a: &Coefficient1D, n_t: usize, n_x: usize, tol: f64) -> Result<CellSolution, CellError> {
    let kt = a.field.max_abs_kt() as usize;
    let kx = a.field.max_abs_kx(0) as usize;
    if n_x < (2 * kx + 1).max(3) || n_t < (2 * kt + 1).max(1) {
        return Err(CellError::GridTooCoarse { n_t, n_x });
    }
    let dt = 1.0 / n_t as f64;
    let dx = 1.0 / n_x as f64;
    let mut af = vec![0.0; n_t * n_x];
    for i in 0..n_t {
        let t = (i as f64 - 0.5) * dt;
        for j in 0..n_x {
            af[i * n_x + j] = a.eval(t, (j as f64 + 0.5) * dx);
        }
    }
    let floor = floor_for(a);
    let zero_faces = (0..n_x).filter(|j| (0..n_t).all(|i| af[i * n_x + j] <= floor)).count();
    if zero_faces >= 2 {
        return Err(CellError::SingularSystem { zero_faces });
    }
    let degenerate = af.iter().any(|v| *v <= floor);
    let sys = SpaceTime {
        n_t,
        n_x,
        dt,
        dx2: dx * dx,
        af,
    };
    let mut rhs = sys.rhs();
    subtract_mean(&mut rhs);
    let mut v = vec![0.0; n_t * n_x];
    let opts = KrylovOptions {
        tol,
        max_iter: 4000,
        restart: 80,
    };
    let out = gmres(&sys, &ForwardSweep { sys: &sys }, &rhs, &mut v, &opts);
    if !out.converged {
        return Err(CellError::SolverDivergence {
            residual: out.residual,
            iterations: out.iterations,
            history: out.history,
        });
    }
    subtract_mean(&mut v);

    // Face fluxes at half time levels, reported on the node time levels.
    let mut flux = vec![0.0; n_t * n_x];
    let mut total = 0.0;
    for i in 0..n_t {
        let ip = (i + n_t - 1) % n_t;
        for j in 0..n_x {
            let jp = (j + 1) % n_x;
            let grad = 0.5 * ((v[i * n_x + jp] - v[i * n_x + j]) + (v[ip * n_x + jp] - v[ip * n_x + j])) / dx;
            let f = sys.af[i * n_x + j] * (grad + 1.0);
            flux[i * n_x + j] = f;
            total += f;
        }
    }
    Ok(CellSolution {
        regime: Regime::Critical,
        a_eff: total / (n_t * n_x) as f64,
        corrector: v,
        flux,
        n_t,
        n_x,
        residual: out.residual,
        iterations: out.iterations,
        degenerate,
    })
}

/// Critical values on a sequence of square grids with a second-order
/// Richardson extrapolation from the two finest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub grids: Vec<usize>,
    pub values: Vec<f64>,
    pub richardson: f64,
    /// `|A(n_k) − A(n_{k−1})|` for consecutive grids.
    pub drifts: Vec<f64>,
}

pub fn critical_refinement(a: &Coefficient1D, grids: &[usize], tol: f64) -> Result<Refinement, CellError> {
    let mut values = Vec::with_capacity(grids.len());
    for &n in grids {
        values.push(effective_critical(a, n, n, tol)?.a_eff);
    }
    let drifts = values.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let richardson = match values.len() {
        0 => f64::NAN,
        1 => values[0],
        k => {
            let (coarse, fine) = (values[k - 2], values[k - 1]);
            let ratio = grids[k - 1] as f64 / grids[k - 2] as f64;
            let r2 = ratio * ratio;
            (r2 * fine - coarse) / (r2 - 1.0)
        }
    };
    Ok(Refinement {
        grids: grids.to_vec(),
        values,
        richardson,
        drifts,
    })
}

/// Effective diffusivity per regime: closed forms for sub/super, the
/// space-time solve for critical.
pub fn effective_for_regime(
    a: &Coefficient1D,
    regime: Regime,
    n_quad: usize,
    grid: (usize, usize),
    tol: f64,
) -> Result<(f64, bool), CellError> {
    Ok(match regime {
        Regime::Sub => {
            let r = effective_subcritical(a, n_quad);
            (r.a_eff, r.degenerate)
        }
        Regime::Super => {
            let r = effective_supercritical(a, n_quad);
            (r.a_eff, r.degenerate)
        }
        Regime::Critical => {
            let r = effective_critical(a, grid.0, grid.1, tol)?;
            (r.a_eff, r.degenerate)
        }
    })
}
