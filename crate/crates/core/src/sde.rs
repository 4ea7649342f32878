//! Euler–Maruyama simulation of the multiscale diffusion and its
//! Feynman–Kac functional.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{Environment, EvalScratch};
use crate::payoff::Payoff;
use crate::stats::Welford;

pub const DEFAULT_STEP_FACTOR: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SdeError {
    #[error("scaling exponents must be positive and finite (alpha={alpha}, beta={beta})")]
    InvalidScaling { alpha: f64, beta: f64 },
    #[error("epsilon must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
    #[error("step {h} exceeds the admissible {max}")]
    StepTooLarge { h: f64, max: f64 },
    #[error("time interval [{start}, {end}] is empty")]
    InvalidInterval { start: f64, end: f64 },
    #[error("path {path} left the finite range at step {step}")]
    NonFinite { path: u64, step: usize },
    #[error("paths do not share a grid node at t={0}")]
    GridMismatch(f64),
    #[error("at least two samples are needed, got {0}")]
    DegenerateSample(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

impl SdeError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::InvalidScaling { .. } => "InvalidScaling",
            Self::InvalidEpsilon(_) => "InvalidEpsilon",
            Self::StepTooLarge { .. } => "StepTooLarge",
            Self::InvalidInterval { .. } => "InvalidInterval",
            Self::NonFinite { .. } => "NonFinite",
            Self::GridMismatch(_) => "GridMismatch",
            Self::DegenerateSample(_) => "DegenerateSample",
            Self::DimensionMismatch(_) => "DimensionMismatch",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Sub,
    Critical,
    Super,
}

/// Time scale `ε^α` and space scale `ε^β` of the medium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingExponents {
    pub alpha: f64,
    pub beta: f64,
}

impl ScalingExponents {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, SdeError> {
        let s = Self { alpha, beta };
        s.check()?;
        Ok(s)
    }

    pub fn check(&self) -> Result<(), SdeError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if ok(self.alpha) && ok(self.beta) {
            Ok(())
        } else {
            Err(SdeError::InvalidScaling {
                alpha: self.alpha,
                beta: self.beta,
            })
        }
    }

    pub fn critical() -> Self {
        Self { alpha: 2.0, beta: 1.0 }
    }

    pub fn regime(&self) -> Regime {
        let gap = self.alpha - 2.0 * self.beta;
        if gap.abs() <= 1e-12 * (1.0 + self.alpha.abs()) {
            Regime::Critical
        } else if gap < 0.0 {
            Regime::Sub
        } else {
            Regime::Super
        }
    }

    /// `θ(λ) = λ^{1 − α/(2β)}`, identically 1 in the critical case.
    pub fn theta(&self, lambda: f64) -> f64 {
        match self.regime() {
            Regime::Critical => 1.0,
            _ => lambda.powf(1.0 - self.alpha / (2.0 * self.beta)),
        }
    }

    /// Largest admissible step `c_step · min(ε^α, ε^{2β})`.
    pub fn max_step(&self, eps: f64, c_step: f64) -> f64 {
        c_step * eps.powf(self.alpha).min(eps.powf(2.0 * self.beta))
    }
}

/// A recorded trajectory of `(t, X_t, Q_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub dimension: usize,
    pub t: Vec<f64>,
    /// States, row-major: `x[k·d .. (k+1)·d]` is `X` at `t[k]`.
    pub x: Vec<f64>,
    pub q: Vec<f64>,
    pub eps: f64,
    pub h: f64,
    pub seed: u64,
    pub path_index: u64,
}

impl SamplePath {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.x[k * self.dimension..(k + 1) * self.dimension]
    }

    pub fn terminal(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for i in 1..=self.dimension {
            out.push_str(&format!(",X{i}"));
        }
        out.push_str(",Q\n");
        for k in 0..self.len() {
            out.push_str(&format!("{}", self.t[k]));
            for v in self.state(k) {
                out.push_str(&format!(",{v}"));
            }
            out.push_str(&format!(",{}\n", self.q[k]));
        }
        out
    }
}

/// Terminal state and functional of one path.
#[derive(Debug, Clone, PartialEq)]
pub struct Terminal {
    pub x: Vec<f64>,
    pub q: f64,
}

/// Monte Carlo parameters shared by estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McParams {
    pub n_paths: usize,
    pub h: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub h: f64,
}

/// Euler–Maruyama integrator bound to one environment, scaling and `ε`.
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    env: &'a Environment,
    scaling: ScalingExponents,
    eps: f64,
    h: f64,
    record_every: usize,
}

#[derive(Clone, Copy)]
enum Frame {
    Direct,
    Rescaled,
}

impl<'a> Simulator<'a> {
    /// Checks `h ≤ ¼·min(ε^α, ε^{2β})`.
    pub fn new(env: &'a Environment, scaling: ScalingExponents, eps: f64, h: f64) -> Result<Self, SdeError> {
        Self::with_step_factor(env, scaling, eps, h, DEFAULT_STEP_FACTOR)
    }

    pub fn with_step_factor(
        env: &'a Environment,
        scaling: ScalingExponents,
        eps: f64,
        h: f64,
        c_step: f64,
    ) -> Result<Self, SdeError> {
        scaling.check()?;
        if !(eps.is_finite() && eps > 0.0) {
            return Err(SdeError::InvalidEpsilon(eps));
        }
        let max = scaling.max_step(eps, c_step);
        if !(h > 0.0 && h <= max * (1.0 + 1e-12)) {
            return Err(SdeError::StepTooLarge { h, max });
        }
        Ok(Self {
            env,
            scaling,
            eps,
            h,
            record_every: 1,
        })
    }

    /// Record every `k`-th step (plus the endpoints) instead of every step.
    pub fn record_every(mut self, k: usize) -> Self {
        self.record_every = k.max(1);
        self
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Number of steps used to cover a span of length `span`.
    pub fn steps_for(&self, span: f64) -> usize {
        self.n_steps(span)
    }

    fn n_steps(&self, span: f64) -> usize {
        ((span / self.h) * (1.0 - 1e-12)).ceil().max(1.0) as usize
    }

    fn check_start(&self, s: f64, x0: &[f64], t_end: f64) -> Result<(), SdeError> {
        if x0.len() != self.env.dimension() {
            return Err(SdeError::DimensionMismatch(format!(
                "start point has {} coordinates, environment has {}",
                x0.len(),
                self.env.dimension()
            )));
        }
        // Written this way so that NaN endpoints are rejected too.
        if t_end.partial_cmp(&s) != Some(std::cmp::Ordering::Greater) {
            return Err(SdeError::InvalidInterval { start: s, end: t_end });
        }
        Ok(())
    }

    /// Core recursion. In the direct frame the state is `X^ε` and the
    /// medium is read at `(t/ε^α, X/ε^β)`; in the rescaled frame the state
    /// is `X̄` on the fast clock `r = t/ε^{2β}` and the medium is read at
    /// `(ε^{2β−α} r, X̄)`. `observe` receives `(k, t, X, Q)` in original units.
    #[allow(clippy::too_many_arguments)]
    fn integrate<F: FnMut(usize, f64, &[f64], f64)>(
        &self,
        frame: Frame,
        s: f64,
        x0: &[f64],
        t_end: f64,
        seed: u64,
        path_index: u64,
        mut observe: F,
    ) -> Result<(), SdeError> {
        let env = self.env;
        let d = env.dimension();
        let eps = self.eps;
        let (alpha, beta) = (self.scaling.alpha, self.scaling.beta);
        let eps_beta = eps.powf(beta);
        let eps_2beta = eps.powf(2.0 * beta);
        let span = t_end - s;
        let n = self.n_steps(span);
        let h_orig = span / n as f64;

        // (clock scale, space scale, drift factor, step, state scale to output)
        let (tscale, xscale, bfac, step, out_scale) = match frame {
            Frame::Direct => (eps.powf(-alpha), 1.0 / eps_beta, 1.0 / eps_beta, h_orig, 1.0),
            Frame::Rescaled => (eps.powf(2.0 * beta - alpha), 1.0, 1.0, h_orig / eps_2beta, eps_beta),
        };
        let (qc_fac, qd_fac) = match frame {
            Frame::Direct => (1.0 / eps_beta, 1.0),
            Frame::Rescaled => (eps_beta, eps_2beta),
        };
        let r0 = match frame {
            Frame::Direct => s,
            Frame::Rescaled => s / eps_2beta,
        };
        let sqrt_step = step.sqrt();

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path_index);
        let mut scratch = EvalScratch::new(d);
        let mut b = vec![0.0; d];
        let mut sigma = vec![0.0; d * d];
        let mut y = vec![0.0; d];
        let mut z = vec![0.0; d];
        let mut out = vec![0.0; d];
        let mut state: Vec<f64> = x0.iter().map(|v| v / out_scale).collect();
        let (has_c, has_d) = (env.has_c(), env.has_d());
        // Running means of c and d along the path: Q_k = elapsed_k · mean.
        let (mut mean_c, mut mean_d) = (0.0, 0.0);

        observe(0, s, x0, 0.0);
        for k in 0..n {
            let r = r0 + k as f64 * step;
            let tau = r * tscale;
            for (yi, si) in y.iter_mut().zip(&state) {
                *yi = si * xscale;
            }
            env.drift_and_sigma(tau, &y, &mut scratch, &mut b, &mut sigma);
            let kk = (k + 1) as f64;
            if has_c {
                let c = env.c_value(tau, &y, &mut scratch);
                mean_c += (c - mean_c) / kk;
            }
            if has_d {
                let dv = env.d_value(tau, &y);
                mean_d += (dv - mean_d) / kk;
            }
            for zi in z.iter_mut() {
                *zi = StandardNormal.sample(&mut rng);
            }
            for i in 0..d {
                let mut noise = 0.0;
                for j in 0..d {
                    noise += sigma[i * d + j] * z[j];
                }
                state[i] += bfac * b[i] * step + noise * sqrt_step;
            }
            if !state.iter().all(|v| v.is_finite()) {
                return Err(SdeError::NonFinite {
                    path: path_index,
                    step: k + 1,
                });
            }
            let last = k + 1 == n;
            let (t_now, elapsed) = if last {
                (t_end, span)
            } else {
                (s + (k + 1) as f64 * h_orig, (k + 1) as f64 * h_orig)
            };
            let elapsed_fast = match frame {
                Frame::Direct => elapsed,
                Frame::Rescaled => elapsed / eps_2beta,
            };
            let q = qc_fac * (elapsed_fast * mean_c) + qd_fac * (elapsed_fast * mean_d);
            for (o, si) in out.iter_mut().zip(&state) {
                *o = si * out_scale;
            }
            observe(k + 1, t_now, &out, q);
        }
        Ok(())
    }

    fn record(
        &self,
        frame: Frame,
        s: f64,
        x0: &[f64],
        t_end: f64,
        seed: u64,
        path_index: u64,
    ) -> Result<SamplePath, SdeError> {
        self.check_start(s, x0, t_end)?;
        let d = self.env.dimension();
        let n = self.n_steps(t_end - s);
        let every = self.record_every;
        let cap = n / every + 2;
        let mut path = SamplePath {
            dimension: d,
            t: Vec::with_capacity(cap),
            x: Vec::with_capacity(cap * d),
            q: Vec::with_capacity(cap),
            eps: self.eps,
            h: (t_end - s) / n as f64,
            seed,
            path_index,
        };
        self.integrate(frame, s, x0, t_end, seed, path_index, |k, t, x, q| {
            if k % every == 0 || k == n {
                path.t.push(t);
                path.x.extend_from_slice(x);
                path.q.push(q);
            }
        })?;
        Ok(path)
    }

    /// One path of `X^ε` started at `(s, x0)`, using RNG stream `path_index`.
    pub fn path(&self, s: f64, x0: &[f64], t_end: f64, seed: u64, path_index: u64) -> Result<SamplePath, SdeError> {
        self.record(Frame::Direct, s, x0, t_end, seed, path_index)
    }

    /// One path of `ε^β X̄_{t/ε^{2β}}` started from the origin at time 0.
    pub fn rescaled_path(&self, t_end: f64, seed: u64, path_index: u64) -> Result<SamplePath, SdeError> {
        let x0 = vec![0.0; self.env.dimension()];
        self.record(Frame::Rescaled, 0.0, &x0, t_end, seed, path_index)
    }

    /// Terminal state and functional only, without storing the path.
    pub fn terminal(&self, s: f64, x0: &[f64], t_end: f64, seed: u64, path_index: u64) -> Result<Terminal, SdeError> {
        self.check_start(s, x0, t_end)?;
        let mut term = Terminal { x: x0.to_vec(), q: 0.0 };
        self.integrate(Frame::Direct, s, x0, t_end, seed, path_index, |_, _, x, q| {
            term.x.copy_from_slice(x);
            term.q = q;
        })?;
        Ok(term)
    }

    /// Terminal values of `n_paths` paths, computed in parallel and
    /// returned in path order.
    pub fn terminals(
        &self,
        s: f64,
        x0: &[f64],
        t_end: f64,
        n_paths: usize,
        seed: u64,
    ) -> Result<Vec<Terminal>, SdeError> {
        (0..n_paths as u64)
            .into_par_iter()
            .map(|i| self.terminal(s, x0, t_end, seed, i))
            .collect()
    }

    /// `n_paths` recorded paths, computed in parallel, in path order.
    pub fn paths(
        &self,
        s: f64,
        x0: &[f64],
        t_end: f64,
        n_paths: usize,
        seed: u64,
    ) -> Result<Vec<SamplePath>, SdeError> {
        (0..n_paths as u64)
            .into_par_iter()
            .map(|i| self.path(s, x0, t_end, seed, i))
            .collect()
    }

    /// Streams through one path, handing `(k, t, X, Q)` to `observe`.
    pub fn visit<F: FnMut(usize, f64, &[f64], f64)>(
        &self,
        s: f64,
        x0: &[f64],
        t_end: f64,
        seed: u64,
        path_index: u64,
        observe: F,
    ) -> Result<(), SdeError> {
        self.check_start(s, x0, t_end)?;
        self.integrate(Frame::Direct, s, x0, t_end, seed, path_index, observe)
    }
}

/// One Euler–Maruyama path of `X^ε` started at `start = (s, x)`.
pub fn simulate_path(
    env: &Environment,
    scaling: ScalingExponents,
    eps: f64,
    start: (f64, &[f64]),
    t_end: f64,
    h: f64,
    seed: u64,
) -> Result<SamplePath, SdeError> {
    Simulator::new(env, scaling, eps, h)?.path(start.0, start.1, t_end, seed, 0)
}

/// One path of the rescaled process `ε^β X̄_{t/ε^{2β}}` from the origin.
pub fn simulate_rescaled(
    env: &Environment,
    scaling: ScalingExponents,
    eps: f64,
    t_end: f64,
    h: f64,
    seed: u64,
) -> Result<SamplePath, SdeError> {
    Simulator::new(env, scaling, eps, h)?.rescaled_path(t_end, seed, 0)
}

/// Monte Carlo estimate of `E_x[f(X_t^ε) exp(Q_t^ε)]`.
pub fn feynman_kac_estimate(
    env: &Environment,
    scaling: ScalingExponents,
    eps: f64,
    x: &[f64],
    t: f64,
    payoff: &Payoff,
    mc: &McParams,
) -> Result<Estimate, SdeError> {
    if !payoff.accepts_dimension(env.dimension()) {
        return Err(SdeError::DimensionMismatch(
            "payoff does not match the environment".into(),
        ));
    }
    let sim = Simulator::new(env, scaling, eps, mc.h)?;
    let terms = sim.terminals(0.0, x, t, mc.n_paths, mc.seed)?;
    let mut acc = Welford::default();
    for term in &terms {
        acc.push(payoff.eval(&term.x) * term.q.exp());
    }
    Ok(Estimate {
        mean: acc.mean(),
        stderr: acc.stderr(),
        n_paths: mc.n_paths,
        seed: mc.seed,
        h: mc.h,
    })
}

/// Sample covariance of `X_t` with per-entry standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covariance {
    pub dimension: usize,
    pub mean: Vec<f64>,
    pub cov: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n: usize,
}

/// Unbiased covariance of a set of points (rows of length `d`).
pub fn covariance_of(d: usize, points: &[Vec<f64>]) -> Result<Covariance, SdeError> {
    let n = points.len();
    if n < 2 {
        return Err(SdeError::DegenerateSample(n));
    }
    let mut mean = vec![0.0; d];
    for p in points {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![0.0; d * d];
    let mut stderr = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            let prods: Vec<f64> = points.iter().map(|p| (p[i] - mean[i]) * (p[j] - mean[j])).collect();
            let s: f64 = prods.iter().sum::<f64>() / (n - 1) as f64;
            let m = prods.iter().sum::<f64>() / n as f64;
            let var = prods.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64;
            cov[i * d + j] = s;
            stderr[i * d + j] = (var / n as f64).sqrt();
        }
    }
    Ok(Covariance {
        dimension: d,
        mean,
        cov,
        stderr,
        n,
    })
}

/// Covariance of `X_t` across paths sharing a grid node at `t`.
pub fn empirical_covariance(paths: &[SamplePath], t: f64) -> Result<Covariance, SdeError> {
    let n = paths.len();
    if n < 2 {
        return Err(SdeError::DegenerateSample(n));
    }
    let tol = 1e-9 * t.abs().max(1.0);
    let d = paths[0].dimension;
    let mut points = Vec::with_capacity(n);
    for p in paths {
        let k =
            p.t.iter()
                .position(|s| (s - t).abs() <= tol)
                .ok_or(SdeError::GridMismatch(t))?;
        if p.dimension != d || (paths[0].t.len() != p.t.len()) {
            return Err(SdeError::GridMismatch(t));
        }
        points.push(p.state(k).to_vec());
    }
    covariance_of(d, &points)
}
