use serde::{Deserialize, Serialize};

use super::CorrectorError;
use crate::environment::Environment;

/// Uniform grid on the space-time torus `[0,1) × [0,1)^d`.
///
/// Node `(i, j)` sits at `(i/n_t, j/n_x)`; spatial multi-indices are
/// flattened with the first axis fastest. Cell centres sit half a spacing
/// up every spatial axis from the node with the same index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorusGrid {
    pub n_t: usize,
    pub n_x: Vec<usize>,
}

impl TorusGrid {
    pub fn new(n_t: usize, n_x: Vec<usize>) -> Self {
        Self { n_t, n_x }
    }

    /// `n` nodes on every spatial axis.
    pub fn square(d: usize, n_t: usize, n: usize) -> Self {
        Self::new(n_t, vec![n; d])
    }

    pub fn dimension(&self) -> usize {
        self.n_x.len()
    }

    pub fn n_space(&self) -> usize {
        self.n_x.iter().product()
    }

    pub fn len(&self) -> usize {
        self.n_t * self.n_space()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.n_t as f64
    }

    pub fn dx(&self, axis: usize) -> f64 {
        1.0 / self.n_x[axis] as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 / self.n_t as f64
    }

    pub fn node(&self, flat: usize, x: &mut [f64]) {
        let mut r = flat;
        for (xi, n) in x.iter_mut().zip(&self.n_x) {
            *xi = (r % n) as f64 / *n as f64;
            r /= n;
        }
    }

    pub fn center(&self, flat: usize, x: &mut [f64]) {
        let mut r = flat;
        for (xi, n) in x.iter_mut().zip(&self.n_x) {
            *xi = ((r % n) as f64 + 0.5) / *n as f64;
            r /= n;
        }
    }

    /// Checks dimension and that every axis carries at least four nodes
    /// per shortest wavelength of the environment.
    pub fn check(&self, env: &Environment) -> Result<(), CorrectorError> {
        let d = self.dimension();
        if !(d == 1 || d == 2) {
            return Err(CorrectorError::UnsupportedDimension(d));
        }
        if env.dimension() != d {
            return Err(CorrectorError::DimensionMismatch {
                grid: d,
                environment: env.dimension(),
            });
        }
        let spec = env.spec();
        let kt = spec.max_abs_kt() as usize;
        if self.n_t < (4 * kt).max(1) {
            return Err(CorrectorError::GridTooCoarse {
                axis: "t".into(),
                nodes: self.n_t,
                required: 4 * kt,
            });
        }
        for (axis, n) in self.n_x.iter().enumerate() {
            let need = (4 * spec.max_abs_kx(axis) as usize).max(3);
            if *n < need {
                return Err(CorrectorError::GridTooCoarse {
                    axis: format!("x{}", axis + 1),
                    nodes: *n,
                    required: need,
                });
            }
        }
        Ok(())
    }
}

/// Values on the nodes of a [`TorusGrid`], time-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteField {
    pub grid: TorusGrid,
    pub values: Vec<f64>,
}

impl DiscreteField {
    pub fn zeros(grid: &TorusGrid) -> Self {
        Self {
            values: vec![0.0; grid.len()],
            grid: grid.clone(),
        }
    }

    /// Samples `f(t, x)` at every node.
    pub fn sample(grid: &TorusGrid, mut f: impl FnMut(f64, &[f64]) -> f64) -> Self {
        let d = grid.dimension();
        let mut x = vec![0.0; d];
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..grid.n_t {
            let t = grid.time(i);
            for flat in 0..grid.n_space() {
                grid.node(flat, &mut x);
                values.push(f(t, &x));
            }
        }
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn to_csv(&self) -> String {
        let d = self.grid.dimension();
        let mut out = String::from("t");
        for k in 1..=d {
            out.push_str(&format!(",x{k}"));
        }
        out.push_str(",value\n");
        let mut x = vec![0.0; d];
        let ns = self.grid.n_space();
        for i in 0..self.grid.n_t {
            for flat in 0..ns {
                self.grid.node(flat, &mut x);
                out.push_str(&format!("{}", self.grid.time(i)));
                for v in &x {
                    out.push_str(&format!(",{v}"));
                }
                out.push_str(&format!(",{}\n", self.values[i * ns + flat]));
            }
        }
        out
    }
}
