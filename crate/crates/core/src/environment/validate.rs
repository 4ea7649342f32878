use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Environment, EnvironmentError, EnvironmentSpec, EvalScratch};
use crate::linalg::{abs_matrix, min_eigenvalue, psd_sqrt};

const TOL: f64 = 1e-10;

/// Grid of nodes on which pointwise invariants are checked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationGrid {
    pub n_t: usize,
    pub n_x: Vec<usize>,
}

impl ValidationGrid {
    /// Eight nodes per shortest wavelength on every axis, at least 16 per
    /// spatial axis; a single time slice for time-independent specs.
    pub fn for_spec(spec: &EnvironmentSpec) -> Self {
        let kt = spec.max_abs_kt() as usize;
        let n_t = if kt == 0 { 1 } else { (8 * kt).max(16) };
        let per_axis = if spec.dimension <= 2 { 16 } else { 8 };
        let n_x = (0..spec.dimension)
            .map(|i| (8 * spec.max_abs_kx(i) as usize).max(per_axis))
            .collect();
        Self { n_t, n_x }
    }

    fn check(&self, spec: &EnvironmentSpec) -> Result<(), EnvironmentError> {
        if self.n_x.len() != spec.dimension {
            return Err(EnvironmentError::DimensionMismatch(format!(
                "validation grid has {} spatial axes, environment has {}",
                self.n_x.len(),
                spec.dimension
            )));
        }
        let need_t = 2 * spec.max_abs_kt() as usize;
        if self.n_t < need_t.max(1) {
            return Err(EnvironmentError::UnderResolvedGrid {
                axis: "t".into(),
                resolution: self.n_t,
                required: need_t.max(1),
            });
        }
        for (i, n) in self.n_x.iter().enumerate() {
            let need = (2 * spec.max_abs_kx(i) as usize).max(1);
            if *n < need {
                return Err(EnvironmentError::UnderResolvedGrid {
                    axis: format!("x{}", i + 1),
                    resolution: *n,
                    required: need,
                });
            }
        }
        Ok(())
    }
}

/// Which structural bound failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundKind {
    /// `m·ã ⪯ a`
    LowerControl,
    /// `a ⪯ M·ã`
    UpperControl,
    /// `|H| ⪯ C1H·ã`
    Stream,
    /// `|∂_t H| ⪯ C2H·ã`
    StreamRate,
    /// `|∂_t a| ⪯ C2a·ã`
    DiffusionRate,
    /// sup norm of the coefficients against `K`
    Sup,
}

/// Worst grid point of a failed bound. `margin` is the smallest eigenvalue
/// of the slack matrix (negative on failure).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub kind: BoundKind,
    pub t: f64,
    pub x: Vec<f64>,
    pub margin: f64,
}

impl fmt::Display for BoundReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "bound {:?} violated at t={}, x={:?} (margin {:e})",
            self.kind, self.t, self.x, self.margin
        )
    }
}

struct Worst {
    kind: BoundKind,
    margin: f64,
    scale: f64,
    t: f64,
    x: Vec<f64>,
}

impl Worst {
    fn new(kind: BoundKind) -> Self {
        Self {
            kind,
            margin: f64::INFINITY,
            scale: 1.0,
            t: 0.0,
            x: Vec::new(),
        }
    }

    fn offer(&mut self, margin: f64, scale: f64, t: f64, x: &[f64]) {
        if margin < self.margin {
            self.margin = margin;
            self.scale = scale;
            self.t = t;
            self.x = x.to_vec();
        }
    }

    fn failed(&self) -> bool {
        self.margin < -TOL * (1.0 + self.scale)
    }
}

fn max_abs(m: &[f64]) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

pub(super) fn validate(env: &Environment, grid: &ValidationGrid) -> Result<(), EnvironmentError> {
    let spec = env.spec();
    let d = spec.dimension;
    for (name, value) in spec.constants.named() {
        if !(value.is_finite() && value > 0.0) {
            return Err(EnvironmentError::InvalidConstant {
                name: name.into(),
                value,
            });
        }
    }
    grid.check(spec)?;
    if !spec.a_tilde.iter().all(|g| g.is_time_independent()) {
        return Err(EnvironmentError::TimeDependenceViolation {
            field: "a_tilde".into(),
        });
    }
    if !spec.v.is_time_independent() {
        return Err(EnvironmentError::TimeDependenceViolation { field: "V".into() });
    }

    let k = &spec.constants;
    let mut worst = [
        Worst::new(BoundKind::LowerControl),
        Worst::new(BoundKind::UpperControl),
        Worst::new(BoundKind::Stream),
        Worst::new(BoundKind::StreamRate),
        Worst::new(BoundKind::DiffusionRate),
        Worst::new(BoundKind::Sup),
    ];
    let dd = d * d;
    let mut scratch = EvalScratch::new(d);
    let (mut a, mut at, mut h) = (vec![0.0; dd], vec![0.0; dd], vec![0.0; dd]);
    let (mut dth, mut dta) = (vec![0.0; dd], vec![0.0; dd]);
    let (mut sigma, mut st) = (vec![0.0; dd], vec![0.0; dd]);
    let (mut slack, mut absm) = (vec![0.0; dd], vec![0.0; dd]);
    let mut b = vec![0.0; d];
    let mut x = vec![0.0; d];
    let n_space: usize = grid.n_x.iter().product();

    for it in 0..grid.n_t {
        let t = it as f64 / grid.n_t as f64;
        for flat in 0..n_space {
            let mut r = flat;
            for (xi, n) in x.iter_mut().zip(&grid.n_x) {
                *xi = (r % n) as f64 / *n as f64;
                r /= n;
            }
            env.a_into(t, &x, &mut a);
            env.a_tilde_into(&x, &mut at);
            env.h_into(t, &x, &mut h);
            for q in 0..dd {
                dth[q] = spec.h[q].dt(t, &x);
                dta[q] = spec.a[q].dt(t, &x);
            }

            for i in 0..d {
                for j in i + 1..d {
                    for (name, m) in [("a", &a), ("a_tilde", &at)] {
                        let gap = (m[i * d + j] - m[j * d + i]).abs();
                        if gap > TOL * (1.0 + m[i * d + j].abs()) {
                            return Err(EnvironmentError::SymmetryViolation {
                                field: name.into(),
                                i,
                                j,
                                t,
                                x: x.clone(),
                                gap,
                            });
                        }
                    }
                }
            }
            for i in 0..d {
                for j in i..d {
                    let gap = (h[i * d + j] + h[j * d + i]).abs();
                    if gap > TOL * (1.0 + h[i * d + j].abs()) {
                        return Err(EnvironmentError::AntisymmetryViolation {
                            i,
                            j,
                            t,
                            x: x.clone(),
                            gap,
                        });
                    }
                }
            }
            for (name, m) in [("a", &a), ("a_tilde", &at)] {
                let ev = min_eigenvalue(d, m);
                if ev < -TOL * (1.0 + max_abs(m)) {
                    return Err(EnvironmentError::PsdViolation {
                        field: name.into(),
                        t,
                        x: x.clone(),
                        min_eigenvalue: ev,
                    });
                }
            }

            let scale = max_abs(&a).max(max_abs(&at));
            for q in 0..dd {
                slack[q] = a[q] - k.m * at[q];
            }
            worst[0].offer(min_eigenvalue(d, &slack), scale, t, &x);
            for q in 0..dd {
                slack[q] = k.big_m * at[q] - a[q];
            }
            worst[1].offer(min_eigenvalue(d, &slack), scale, t, &x);
            for (w, src, c) in [(2usize, &h, k.c1h), (3, &dth, k.c2h), (4, &dta, k.c2a)] {
                abs_matrix(d, src, &mut absm);
                for q in 0..dd {
                    slack[q] = c * at[q] - absm[q];
                }
                let sc = max_abs(&absm).max(max_abs(&at));
                worst[w].offer(min_eigenvalue(d, &slack), sc, t, &x);
            }

            env.drift_and_sigma(t, &x, &mut scratch, &mut b, &mut sigma);
            psd_sqrt(d, &at, &mut st);
            let c = env.c_value(t, &x, &mut scratch);
            let sup = [
                max_abs(&a),
                max_abs(&sigma),
                max_abs(&at),
                max_abs(&st),
                max_abs(&h),
                max_abs(&b),
                env.v(&x).abs(),
                c.abs(),
                env.d_value(t, &x).abs(),
            ]
            .into_iter()
            .fold(0.0, f64::max);
            worst[5].offer(k.k - sup, sup, t, &x);
        }
    }

    if let Some(w) = worst.iter().find(|w| w.failed()) {
        return Err(EnvironmentError::BoundViolation(Box::new(BoundReport {
            kind: w.kind,
            t: w.t,
            x: w.x.clone(),
            margin: w.margin,
        })));
    }
    Ok(())
}
