use super::grid::TorusGrid;
use crate::environment::Environment;
use crate::krylov::{LinearOperator, Preconditioner};
use crate::linalg::{psd_sqrt, solve_cyclic_tridiagonal};

/// Environment sampled on a torus grid: weights at nodes and cell centres,
/// and the flux coefficients `K = e^{-2V}(a + H)` at the centres.
#[derive(Debug, Clone)]
pub struct DiscreteMedium {
    pub(crate) grid: TorusGrid,
    pub(crate) times: Vec<f64>,
    pub(crate) d: usize,
    /// `e^{-2V}` at spatial nodes and centres.
    pub(crate) w_node: Vec<f64>,
    pub(crate) w_center: Vec<f64>,
    /// Mean of `w_node`; the discrete normalization.
    pub(crate) z: f64,
    /// `[i][c][k·d + l]` layouts, time-major.
    pub(crate) k: Vec<f64>,
    pub(crate) a_center: Vec<f64>,
    pub(crate) sigma_center: Vec<f64>,
    /// `ã` at centres, time independent.
    pub(crate) at_center: Vec<f64>,
    /// Diagonal of `−L_h`.
    pub(crate) diag: Vec<f64>,
    pub(crate) m: f64,
}

// Signs of ∂(G_k u)_c / ∂u_n for the four corners of a 2-D cell, ordered
// (c1, c2), (c1+1, c2), (c1, c2+1), (c1+1, c2+1).
const CORNERS: [(usize, usize, f64, f64); 4] = [
    (0, 0, -1.0, -1.0),
    (1, 0, 1.0, -1.0),
    (0, 1, -1.0, 1.0),
    (1, 1, 1.0, 1.0),
];

impl DiscreteMedium {
    pub fn new(env: &Environment, grid: &TorusGrid) -> Self {
        let times = (0..grid.n_t).map(|i| grid.time(i)).collect();
        Self::at_times(env, grid, times)
    }

    /// Medium on the spatial grid of `grid`, sampled at the given times.
    pub(crate) fn at_times(env: &Environment, grid: &TorusGrid, times: Vec<f64>) -> Self {
        let d = grid.dimension();
        let dd = d * d;
        let ns = grid.n_space();
        let n_t = times.len();
        let grid = TorusGrid::new(n_t, grid.n_x.clone());
        let mut x = vec![0.0; d];
        let mut w_node = Vec::with_capacity(ns);
        let mut w_center = Vec::with_capacity(ns);
        let mut at_center = vec![0.0; ns * dd];
        for c in 0..ns {
            grid.node(c, &mut x);
            w_node.push((-2.0 * env.v(&x)).exp());
            grid.center(c, &mut x);
            w_center.push((-2.0 * env.v(&x)).exp());
            env.a_tilde_into(&x, &mut at_center[c * dd..(c + 1) * dd]);
        }
        let z = w_node.iter().sum::<f64>() / ns as f64;
        let mut k = vec![0.0; n_t * ns * dd];
        let mut a_center = vec![0.0; n_t * ns * dd];
        let mut sigma_center = vec![0.0; n_t * ns * dd];
        let mut h = vec![0.0; dd];
        for (i, t) in times.iter().enumerate() {
            for c in 0..ns {
                grid.center(c, &mut x);
                let off = (i * ns + c) * dd;
                env.a_into(*t, &x, &mut a_center[off..off + dd]);
                env.h_into(*t, &x, &mut h);
                psd_sqrt(d, &a_center[off..off + dd], &mut sigma_center[off..off + dd]);
                for q in 0..dd {
                    k[off + q] = w_center[c] * (a_center[off + q] + h[q]);
                }
            }
        }
        let mut medium = Self {
            grid,
            times,
            d,
            w_node,
            w_center,
            z,
            k,
            a_center,
            sigma_center,
            at_center,
            diag: Vec::new(),
            m: env.constants().m,
        };
        medium.diag = medium.compute_diag();
        medium
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    fn compute_diag(&self) -> Vec<f64> {
        let ns = self.grid.n_space();
        let dd = self.d * self.d;
        let mut diag = vec![0.0; self.grid.len()];
        for i in 0..self.grid.n_t {
            for c in 0..ns {
                let kc = &self.k[(i * ns + c) * dd..(i * ns + c + 1) * dd];
                match self.d {
                    1 => {
                        let dx2 = self.grid.dx(0).powi(2);
                        let n = self.grid.n_x[0];
                        diag[i * ns + c] += kc[0] / dx2;
                        diag[i * ns + (c + 1) % n] += kc[0] / dx2;
                    }
                    _ => {
                        let (n1, n2) = (self.grid.n_x[0], self.grid.n_x[1]);
                        let (h1, h2) = (0.5 / self.grid.dx(0), 0.5 / self.grid.dx(1));
                        let (c1, c2) = (c % n1, c / n1);
                        for (o1, o2, s1, s2) in CORNERS {
                            let node = (c1 + o1) % n1 + ((c2 + o2) % n2) * n1;
                            let (g1, g2) = (s1 * h1, s2 * h2);
                            let q = kc[0] * g1 * g1 + (kc[1] + kc[2]) * g1 * g2 + kc[3] * g2 * g2;
                            diag[i * ns + node] += q;
                        }
                    }
                }
            }
        }
        for i in 0..self.grid.n_t {
            for n in 0..ns {
                diag[i * ns + n] /= 2.0 * self.w_node[n];
            }
        }
        diag
    }

    /// Spatial gradient of one time slice at the cell centres, `g[c·d + k]`.
    pub(crate) fn gradient(&self, u: &[f64], g: &mut [f64]) {
        match self.d {
            1 => {
                let n = self.grid.n_x[0];
                let inv = 1.0 / self.grid.dx(0);
                for c in 0..n {
                    g[c] = (u[(c + 1) % n] - u[c]) * inv;
                }
            }
            _ => {
                let (n1, n2) = (self.grid.n_x[0], self.grid.n_x[1]);
                let (h1, h2) = (0.5 / self.grid.dx(0), 0.5 / self.grid.dx(1));
                for c2 in 0..n2 {
                    let r0 = c2 * n1;
                    let r1 = ((c2 + 1) % n2) * n1;
                    for c1 in 0..n1 {
                        let p = (c1 + 1) % n1;
                        let (u00, u10, u01, u11) = (u[r0 + c1], u[r0 + p], u[r1 + c1], u[r1 + p]);
                        let c = r0 + c1;
                        g[2 * c] = (u10 - u00 + u11 - u01) * h1;
                        g[2 * c + 1] = (u01 - u00 + u11 - u10) * h2;
                    }
                }
            }
        }
    }

    /// `out = −L_h u` on every time slice.
    pub fn minus_l(&self, u: &[f64], out: &mut [f64]) {
        let ns = self.grid.n_space();
        let d = self.d;
        let dd = d * d;
        let mut g = vec![0.0; ns * d];
        let mut f = vec![0.0; d];
        for i in 0..self.grid.n_t {
            let us = &u[i * ns..(i + 1) * ns];
            let os = &mut out[i * ns..(i + 1) * ns];
            os.iter_mut().for_each(|v| *v = 0.0);
            self.gradient(us, &mut g);
            let ks = &self.k[i * ns * dd..(i + 1) * ns * dd];
            match d {
                1 => {
                    let n = self.grid.n_x[0];
                    let inv = 1.0 / self.grid.dx(0);
                    for c in 0..n {
                        let fl = ks[c] * g[c] * inv;
                        os[c] -= fl;
                        os[(c + 1) % n] += fl;
                    }
                }
                _ => {
                    let (n1, n2) = (self.grid.n_x[0], self.grid.n_x[1]);
                    let (h1, h2) = (0.5 / self.grid.dx(0), 0.5 / self.grid.dx(1));
                    for c in 0..ns {
                        let kc = &ks[c * 4..c * 4 + 4];
                        let (g1, g2) = (g[2 * c], g[2 * c + 1]);
                        // flux_j = Σ_i K_ij g_i
                        f[0] = kc[0] * g1 + kc[2] * g2;
                        f[1] = kc[1] * g1 + kc[3] * g2;
                        let (c1, c2) = (c % n1, c / n1);
                        for (o1, o2, s1, s2) in CORNERS {
                            let node = (c1 + o1) % n1 + ((c2 + o2) % n2) * n1;
                            os[node] += s1 * h1 * f[0] + s2 * h2 * f[1];
                        }
                    }
                }
            }
            for (o, w) in os.iter_mut().zip(&self.w_node) {
                *o /= 2.0 * w;
            }
        }
    }

    fn node_weight(&self) -> f64 {
        1.0 / (self.z * self.grid.len() as f64)
    }

    /// `⟨u, v⟩_π` with node weights `e^{-2V}/Z`.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        let ns = self.grid.n_space();
        let mut acc = 0.0;
        for i in 0..self.grid.n_t {
            for n in 0..ns {
                acc += self.w_node[n] * u[i * ns + n] * v[i * ns + n];
            }
        }
        acc * self.node_weight()
    }

    /// `⟨u, 1⟩_π`.
    pub fn mean(&self, u: &[f64]) -> f64 {
        let ns = self.grid.n_space();
        let mut acc = 0.0;
        for i in 0..self.grid.n_t {
            for n in 0..ns {
                acc += self.w_node[n] * u[i * ns + n];
            }
        }
        acc * self.node_weight()
    }

    /// `½ Σ_c π_c Σ_ij (a+H)_ij (G_i u)(G_j v)`, so that
    /// `⟨L_h u, v⟩_π = −form(u, v)`.
    pub fn form(&self, u: &[f64], v: &[f64]) -> f64 {
        self.quadratic(
            u,
            v,
            |i, c| {
                let dd = self.d * self.d;
                &self.k[(i * self.grid.n_space() + c) * dd..(i * self.grid.n_space() + c + 1) * dd]
            },
            false,
        )
    }

    /// `½⟨a ∇_h u, ∇_h u⟩_π`.
    pub fn energy(&self, u: &[f64]) -> f64 {
        let ns = self.grid.n_space();
        let dd = self.d * self.d;
        self.quadratic(
            u,
            u,
            |i, c| &self.a_center[(i * ns + c) * dd..(i * ns + c + 1) * dd],
            true,
        )
    }

    /// Dirichlet seminorm `½⟨ã ∇_h u, ∇_h u⟩_π`.
    pub fn dirichlet(&self, u: &[f64]) -> f64 {
        let dd = self.d * self.d;
        self.quadratic(u, u, |_, c| &self.at_center[c * dd..(c + 1) * dd], true)
    }

    fn quadratic<'s, F: Fn(usize, usize) -> &'s [f64]>(&'s self, u: &[f64], v: &[f64], coef: F, weight: bool) -> f64 {
        let ns = self.grid.n_space();
        let d = self.d;
        let mut gu = vec![0.0; ns * d];
        let mut gv = vec![0.0; ns * d];
        let mut acc = 0.0;
        for i in 0..self.grid.n_t {
            self.gradient(&u[i * ns..(i + 1) * ns], &mut gu);
            self.gradient(&v[i * ns..(i + 1) * ns], &mut gv);
            for c in 0..ns {
                let m = coef(i, c);
                let w = if weight { self.w_center[c] } else { 1.0 };
                let mut q = 0.0;
                for a in 0..d {
                    for b in 0..d {
                        q += m[a * d + b] * gu[c * d + a] * gv[c * d + b];
                    }
                }
                acc += w * q;
            }
        }
        0.5 * acc * self.node_weight()
    }
}

/// `λ − L_h − θ D_t − (δ/2) D_t²` with centred periodic time differences.
/// With `pin_mean`, the rank-one term `⟨u, 1⟩_π` is added, which makes the
/// otherwise singular `λ = 0` problem invertible on π-mean-zero data.
pub struct ResolventOperator<'m> {
    pub medium: &'m DiscreteMedium,
    pub lambda: f64,
    pub theta: f64,
    pub delta: f64,
    pub pin_mean: bool,
}

impl ResolventOperator<'_> {
    fn time_terms(&self) -> bool {
        self.medium.grid.n_t >= 2 && (self.theta != 0.0 || self.delta != 0.0)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let dt2 = self.medium.grid.dt().powi(2);
        let extra = if self.time_terms() { self.delta / dt2 } else { 0.0 };
        self.medium.diag.iter().map(|v| v + self.lambda + extra).collect()
    }
}

impl LinearOperator for ResolventOperator<'_> {
    fn len(&self) -> usize {
        self.medium.grid.len()
    }

    fn apply(&self, u: &[f64], y: &mut [f64]) {
        self.medium.minus_l(u, y);
        for (yi, ui) in y.iter_mut().zip(u) {
            *yi += self.lambda * ui;
        }
        if self.time_terms() {
            let n_t = self.medium.grid.n_t;
            let ns = self.medium.grid.n_space();
            let dt = self.medium.grid.dt();
            let a = self.theta / (2.0 * dt);
            let b = 0.5 * self.delta / (dt * dt);
            for i in 0..n_t {
                let ip = (i + 1) % n_t;
                let im = (i + n_t - 1) % n_t;
                for n in 0..ns {
                    let (up, u0, um) = (u[ip * ns + n], u[i * ns + n], u[im * ns + n]);
                    y[i * ns + n] += -a * (up - um) - b * (up - 2.0 * u0 + um);
                }
            }
        }
        if self.pin_mean {
            let m = self.medium.mean(u);
            y.iter_mut().for_each(|v| *v += m);
        }
    }
}

/// Exact inverse of the time-coupled part along every spatial node's time
/// line (a cyclic tridiagonal system), ignoring spatial coupling.
pub struct TimeLine {
    n_t: usize,
    ns: usize,
    diag: Vec<f64>,
    lower: f64,
    upper: f64,
}

impl TimeLine {
    pub fn new(op: &ResolventOperator<'_>) -> Option<Self> {
        let n_t = op.medium.grid.n_t;
        if n_t < 3 {
            return None;
        }
        let dt = op.medium.grid.dt();
        let a = op.theta / (2.0 * dt);
        let b = 0.5 * op.delta / (dt * dt);
        Some(Self {
            n_t,
            ns: op.medium.grid.n_space(),
            diag: op.diagonal(),
            lower: a - b,
            upper: -a - b,
        })
    }
}

impl Preconditioner for TimeLine {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n_t = self.n_t;
        let lower = vec![self.lower; n_t];
        let upper = vec![self.upper; n_t];
        let mut diag = vec![0.0; n_t];
        let mut rhs = vec![0.0; n_t];
        let mut sol = vec![0.0; n_t];
        for n in 0..self.ns {
            for i in 0..n_t {
                diag[i] = self.diag[i * self.ns + n];
                rhs[i] = r[i * self.ns + n];
            }
            solve_cyclic_tridiagonal(&lower, &diag, &upper, &rhs, &mut sol);
            for i in 0..n_t {
                z[i * self.ns + n] = sol[i];
            }
        }
    }
}
