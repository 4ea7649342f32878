//! Invariant-measure quadrature, ergodic averages along paths and the
//! modulus-of-continuity diagnostic.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{Environment, EvalScratch};
use crate::sde::{McParams, ScalingExponents, SdeError, Simulator};
use crate::trig::TrigField;

/// Streaming mean and variance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Welford {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// Scalar observables of the environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Observable {
    Constant {
        value: f64,
    },
    /// An explicit trigonometric field.
    Field {
        field: TrigField,
    },
    /// The `c` coefficient.
    C,
    /// The `d` coefficient.
    D,
    /// One component of the drift `b`.
    Drift {
        component: usize,
    },
}

impl Observable {
    pub fn eval(&self, env: &Environment, t: f64, x: &[f64], scratch: &mut EvalScratch, b: &mut [f64]) -> f64 {
        match self {
            Self::Constant { value } => *value,
            Self::Field { field } => field.eval(t, x),
            Self::C => env.c_value(t, x, scratch),
            Self::D => env.d_value(t, x),
            Self::Drift { component } => {
                env.drift_into(t, x, scratch, b);
                b[*component]
            }
        }
    }

    /// The observable seen from `(t0, x0)`. Only explicit fields move; the
    /// others are read off the environment, which is translated separately.
    pub fn translated(&self, t0: f64, x0: &[f64]) -> Self {
        match self {
            Self::Field { field } => Self::Field {
                field: field.translated(t0, x0),
            },
            other => other.clone(),
        }
    }

    fn check(&self, env: &Environment) -> Result<(), SdeError> {
        match self {
            Self::Drift { component } if *component >= env.dimension() => Err(SdeError::DimensionMismatch(format!(
                "drift component {component} out of range"
            ))),
            Self::Field { field } if !field.has_dimension(env.dimension()) => {
                Err(SdeError::DimensionMismatch("observable field dimension".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Normalized weights `e^{-2V}/Z` on a space-time torus grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PiMeasure {
    pub n_t: usize,
    pub n_x: Vec<usize>,
    /// Per spatial node; sums to one.
    pub weights: Vec<f64>,
}

impl PiMeasure {
    pub fn new(env: &Environment, n_t: usize, n_x: &[usize]) -> Self {
        let d = env.dimension();
        assert_eq!(n_x.len(), d, "one resolution per spatial axis");
        let n_space: usize = n_x.iter().product();
        let mut x = vec![0.0; d];
        let mut weights = Vec::with_capacity(n_space);
        for flat in 0..n_space {
            node(flat, n_x, &mut x);
            weights.push((-2.0 * env.v(&x)).exp());
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Self {
            n_t: n_t.max(1),
            n_x: n_x.to_vec(),
            weights,
        }
    }

    /// Grid of `n` nodes per spatial axis and `n_t` time nodes.
    pub fn uniform(env: &Environment, n_t: usize, n: usize) -> Self {
        Self::new(env, n_t, &vec![n; env.dimension()])
    }

    /// A grid fine enough for the environment's modes and `g`.
    pub fn resolving(env: &Environment, g: &Observable) -> Self {
        let spec = env.spec();
        let (mut kt, mut kx) = (
            spec.max_abs_kt(),
            (0..spec.dimension).map(|i| spec.max_abs_kx(i)).max().unwrap_or(0),
        );
        if let Observable::Field { field } = g {
            kt = kt.max(field.max_abs_kt());
            kx = kx.max((0..spec.dimension).map(|i| field.max_abs_kx(i)).max().unwrap_or(0));
        }
        let n_t = if kt == 0 { 1 } else { (8 * kt as usize).max(32) };
        let floor = if spec.dimension == 1 { 256 } else { 64 };
        Self::uniform(env, n_t, (8 * kx as usize).max(floor))
    }

    pub fn average(&self, env: &Environment, g: &Observable) -> f64 {
        let d = env.dimension();
        let mut scratch = EvalScratch::new(d);
        let mut b = vec![0.0; d];
        let mut x = vec![0.0; d];
        let mut total = 0.0;
        for it in 0..self.n_t {
            let t = it as f64 / self.n_t as f64;
            let mut slice = 0.0;
            for (flat, w) in self.weights.iter().enumerate() {
                node(flat, &self.n_x, &mut x);
                slice += w * g.eval(env, t, &x, &mut scratch, &mut b);
            }
            total += slice;
        }
        total / self.n_t as f64
    }
}

fn node(flat: usize, n_x: &[usize], x: &mut [f64]) {
    let mut r = flat;
    for (xi, n) in x.iter_mut().zip(n_x) {
        *xi = (r % n) as f64 / *n as f64;
        r /= n;
    }
}

/// `π(g)` by space-time trapezoid quadrature.
pub fn pi_average(env: &Environment, measure: &PiMeasure, g: &Observable) -> f64 {
    measure.average(env, g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicReport {
    pub estimate: f64,
    pub target: f64,
    pub stderr: f64,
    pub gap: f64,
    pub n_paths: usize,
    pub eps: f64,
    pub t: f64,
}

/// Environment draw for path `index`: uniform space-time shift, optional
/// random phases, and the importance weight `e^{-2V(x0)}/Z`. The observable
/// is moved along with the medium.
fn starting_environment(
    env: &Environment,
    g: &Observable,
    seed: u64,
    index: u64,
    random_phase: bool,
) -> (Environment, Observable, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_e4f1_u64);
    rng.set_stream(index);
    let d = env.dimension();
    let t0: f64 = rng.random();
    let x0: Vec<f64> = (0..d).map(|_| rng.random()).collect();
    let base = if random_phase {
        let spec = env.spec().sample_random_phase(rng.random());
        Environment::build_unchecked(spec).expect("phase shifts keep shapes")
    } else {
        env.clone()
    };
    let weight = base.pi_density(&x0);
    (base.translated(t0, &x0), g.translated(t0, &x0), weight)
}

/// Self-normalized weighted mean and its delta-method standard error.
/// Values are centred on the first sample, so equal values come back exactly.
fn self_normalized(samples: &[(f64, f64)]) -> (f64, f64) {
    let Some(&(_, reference)) = samples.first() else {
        return (f64::NAN, f64::NAN);
    };
    let total: f64 = samples.iter().map(|(w, _)| w).sum();
    let shift = samples.iter().map(|(w, v)| w * (v - reference)).sum::<f64>() / total;
    let estimate = reference + shift;
    let spread: f64 = samples.iter().map(|(w, v)| (w * (v - estimate)).powi(2)).sum();
    (estimate, spread.sqrt() / total)
}

/// Time integral `∫₀ᵗ g(s/ε^α, X_s/ε^β) ds` along each path, which equals
/// `ε^{2β} ∫₀^{t/ε^{2β}} g(Y_r) dr` for the environment seen from the
/// particle, averaged over π-distributed starting environments with
/// self-normalized weights. Random phases act on the medium only, so they
/// suit observables read off the environment rather than explicit fields.
pub fn ergodic_average_check(
    env: &Environment,
    scaling: ScalingExponents,
    eps: f64,
    g: &Observable,
    t: f64,
    mc: &McParams,
    random_phase: bool,
) -> Result<ErgodicReport, SdeError> {
    g.check(env)?;
    let target = t * pi_average(env, &PiMeasure::resolving(env, g), g);
    let d = env.dimension();
    let origin = vec![0.0; d];
    let samples: Vec<(f64, f64)> = (0..mc.n_paths as u64)
        .into_par_iter()
        .map(|i| -> Result<(f64, f64), SdeError> {
            let (local, g, weight) = starting_environment(env, g, mc.seed, i, random_phase);
            let sim = Simulator::new(&local, scaling, eps, mc.h)?;
            let n = sim.steps_for(t);
            let (inv_a, inv_b) = (eps.powf(-scaling.alpha), eps.powf(-scaling.beta));
            let mut scratch = EvalScratch::new(d);
            let mut b = vec![0.0; d];
            let mut y = vec![0.0; d];
            let mut mean = 0.0;
            sim.visit(0.0, &origin, t, mc.seed, i, |k, s, x, _| {
                if k < n {
                    for (yi, xi) in y.iter_mut().zip(x) {
                        *yi = xi * inv_b;
                    }
                    let v = g.eval(&local, s * inv_a, &y, &mut scratch, &mut b);
                    mean += (v - mean) / (k + 1) as f64;
                }
            })?;
            Ok((weight, t * mean))
        })
        .collect::<Result<_, _>>()?;
    let (estimate, stderr) = self_normalized(&samples);
    Ok(ErgodicReport {
        estimate,
        target,
        stderr,
        gap: (estimate - target).abs(),
        n_paths: mc.n_paths,
        eps,
        t,
    })
}

/// Which divergence-structured coefficient the modulus is taken of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModulusTarget {
    Drift { component: usize },
    C,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusRow {
    pub delta: f64,
    pub modulus: f64,
    pub stderr: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusReport {
    pub eps: f64,
    pub rows: Vec<ModulusRow>,
    /// Largest over smallest ratio across `δ`.
    pub spread: f64,
    /// Set when the ratio varies by more than a factor two.
    pub flagged: bool,
}

/// `max − min` of `g` over every window of `w + 1` consecutive samples.
pub fn sliding_oscillation(g: &[f64], w: usize) -> f64 {
    let mut maxq: VecDeque<usize> = VecDeque::new();
    let mut minq: VecDeque<usize> = VecDeque::new();
    let mut best: f64 = 0.0;
    for (k, v) in g.iter().enumerate() {
        while maxq.back().is_some_and(|&j| g[j] <= *v) {
            maxq.pop_back();
        }
        maxq.push_back(k);
        while minq.back().is_some_and(|&j| g[j] >= *v) {
            minq.pop_back();
        }
        minq.push_back(k);
        let lo = k.saturating_sub(w);
        while maxq.front().is_some_and(|&j| j < lo) {
            maxq.pop_front();
        }
        while minq.front().is_some_and(|&j| j < lo) {
            minq.pop_front();
        }
        best = best.max(g[maxq[0]] - g[minq[0]]);
    }
    best
}

/// Empirical `E sup_{|t−s|≤δ} |G_t − G_s|` for
/// `G_t = ε^{-β} ∫₀ᵗ g(s/ε^α, X_s/ε^β) ds`, and its ratio to `√δ ln(1/δ)`.
pub fn modulus_diagnostic(
    env: &Environment,
    scaling: ScalingExponents,
    eps: f64,
    target: ModulusTarget,
    horizon: f64,
    deltas: &[f64],
    mc: &McParams,
) -> Result<ModulusReport, SdeError> {
    let g = match target {
        ModulusTarget::Drift { component } => Observable::Drift { component },
        ModulusTarget::C => Observable::C,
    };
    g.check(env)?;
    let d = env.dimension();
    let origin = vec![0.0; d];
    let per_path: Vec<Vec<f64>> = (0..mc.n_paths as u64)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>, SdeError> {
            let (local, g, _) = starting_environment(env, &g, mc.seed, i, false);
            let sim = Simulator::new(&local, scaling, eps, mc.h)?;
            let n = sim.steps_for(horizon);
            let step = horizon / n as f64;
            let (inv_a, inv_b) = (eps.powf(-scaling.alpha), eps.powf(-scaling.beta));
            let mut scratch = EvalScratch::new(d);
            let mut b = vec![0.0; d];
            let mut y = vec![0.0; d];
            let mut cum = Vec::with_capacity(n + 1);
            cum.push(0.0);
            let mut acc = 0.0;
            sim.visit(0.0, &origin, horizon, mc.seed, i, |k, s, x, _| {
                if k < n {
                    for (yi, xi) in y.iter_mut().zip(x) {
                        *yi = xi * inv_b;
                    }
                    acc += inv_b * g.eval(&local, s * inv_a, &y, &mut scratch, &mut b) * step;
                    cum.push(acc);
                }
            })?;
            Ok(deltas
                .iter()
                .map(|delta| {
                    let w = ((delta / step) + 1e-9).floor() as usize;
                    sliding_oscillation(&cum, w)
                })
                .collect())
        })
        .collect::<Result<_, _>>()?;

    let mut rows = Vec::with_capacity(deltas.len());
    for (j, delta) in deltas.iter().enumerate() {
        let mut acc = Welford::default();
        per_path.iter().for_each(|m| acc.push(m[j]));
        let envelope = delta.sqrt() * (1.0 / delta).ln();
        rows.push(ModulusRow {
            delta: *delta,
            modulus: acc.mean(),
            stderr: acc.stderr(),
            ratio: acc.mean() / envelope,
        });
    }
    let hi = rows.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max);
    let lo = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let spread = if lo > 0.0 {
        hi / lo
    } else if hi > 0.0 {
        f64::INFINITY
    } else {
        1.0
    };
    Ok(ModulusReport {
        eps,
        rows,
        spread,
        flagged: spread > 2.0,
    })
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut best: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        best = best.max((i as f64 / n - j as f64 / m).abs());
    }
    best
}

/// Asymptotic critical value of the two-sample statistic at level `alpha`.
pub fn ks_critical(n: usize, m: usize, alpha: f64) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    c * ((n + m) as f64 / (n * m) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welford_constant_has_zero_spread() {
        let mut w = Welford::default();
        for _ in 0..1000 {
            w.push(0.1 + 0.2);
        }
        assert_eq!(w.mean(), 0.1 + 0.2);
        assert_eq!(w.stderr(), 0.0);
    }

    #[test]
    fn oscillation_against_brute_force() {
        let g: Vec<f64> = (0..200).map(|k| ((k * 37 % 101) as f64).sin()).collect();
        for w in [0, 1, 5, 17, 199, 500] {
            let mut brute: f64 = 0.0;
            for i in 0..g.len() {
                for j in i..g.len().min(i + w + 1) {
                    brute = brute.max((g[i] - g[j]).abs());
                }
            }
            assert_eq!(sliding_oscillation(&g, w), brute);
        }
    }

    #[test]
    fn ks_identical_samples() {
        let a: Vec<f64> = (0..50).map(|k| k as f64).collect();
        assert_eq!(ks_statistic(&a, &a), 0.0);
        let b: Vec<f64> = (0..50).map(|k| k as f64 + 100.0).collect();
        assert_eq!(ks_statistic(&a, &b), 1.0);
    }
}
