//! Small dense helpers (row-major `d×d` slices) and banded solvers.

use nalgebra::{DMatrix, SymmetricEigen};

pub(crate) fn to_dmatrix(d: usize, m: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(d, d, m)
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues(d: usize, m: &[f64]) -> Vec<f64> {
    match d {
        1 => vec![m[0]],
        2 => {
            let (a, b, c) = (m[0], 0.5 * (m[1] + m[2]), m[3]);
            let mean = 0.5 * (a + c);
            let r = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            vec![mean - r, mean + r]
        }
        _ => {
            let mut s = to_dmatrix(d, m);
            s = 0.5 * (&s + s.transpose());
            let mut ev: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
            ev.sort_by(|x, y| x.total_cmp(y));
            ev
        }
    }
}

pub fn min_eigenvalue(d: usize, m: &[f64]) -> f64 {
    sym_eigenvalues(d, m)[0]
}

/// Symmetric positive semidefinite square root. Negative eigenvalues
/// (round-off on degenerate matrices) are clamped to zero.
pub fn psd_sqrt(d: usize, m: &[f64], out: &mut [f64]) {
    match d {
        1 => out[0] = m[0].max(0.0).sqrt(),
        2 => {
            let (a, b, c) = (m[0], 0.5 * (m[1] + m[2]), m[3]);
            let det = (a * c - b * b).max(0.0);
            let s = det.sqrt();
            let tau2 = a + c + 2.0 * s;
            if tau2 <= 0.0 {
                out[..4].iter_mut().for_each(|v| *v = 0.0);
                return;
            }
            let tau = tau2.sqrt();
            out[0] = (a + s) / tau;
            out[1] = b / tau;
            out[2] = b / tau;
            out[3] = (c + s) / tau;
        }
        _ => {
            let mut s = to_dmatrix(d, m);
            s = 0.5 * (&s + s.transpose());
            let eig = SymmetricEigen::new(s);
            let q = &eig.eigenvectors;
            for i in 0..d {
                for j in 0..d {
                    let mut acc = 0.0;
                    for k in 0..d {
                        acc += q[(i, k)] * eig.eigenvalues[k].max(0.0).sqrt() * q[(j, k)];
                    }
                    out[i * d + j] = acc;
                }
            }
        }
    }
}

/// `|A| = sqrt(A Aᵀ)` for a general square `A`.
pub fn abs_matrix(d: usize, m: &[f64], out: &mut [f64]) {
    let mut aat = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            aat[i * d + j] = (0..d).map(|k| m[i * d + k] * m[j * d + k]).sum();
        }
    }
    psd_sqrt(d, &aat, out);
}

/// Derivative of the PSD square root: given `S = sqrt(A)` and a symmetric
/// perturbation `dA`, returns `dS` solving `S dS + dS S = dA`. Directions
/// where `s_k + s_l` vanishes contribute zero.
pub fn psd_sqrt_derivative(d: usize, a: &[f64], da: &[f64], out: &mut [f64]) {
    if d == 1 {
        let s = a[0].max(0.0).sqrt();
        out[0] = if s > 1e-300 { da[0] / (2.0 * s) } else { 0.0 };
        return;
    }
    let mut s = to_dmatrix(d, a);
    s = 0.5 * (&s + s.transpose());
    let eig = SymmetricEigen::new(s);
    let q = eig.eigenvectors;
    let roots: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).collect();
    let dam = to_dmatrix(d, da);
    let mut inner = q.transpose() * dam * &q;
    for k in 0..d {
        for l in 0..d {
            let den = roots[k] + roots[l];
            inner[(k, l)] = if den > 1e-300 { inner[(k, l)] / den } else { 0.0 };
        }
    }
    let ds = &q * inner * q.transpose();
    for i in 0..d {
        for j in 0..d {
            out[i * d + j] = ds[(i, j)];
        }
    }
}

/// Solves the cyclic tridiagonal system
/// `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i]` (indices mod n)
/// by the Sherman–Morrison correction of a Thomas sweep. Requires `n ≥ 3`
/// and a system that admits elimination without pivoting.
pub fn solve_cyclic_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64], x: &mut [f64]) {
    let n = diag.len();
    debug_assert!(n >= 3);
    let alpha = upper[n - 1];
    let beta = lower[0];
    let gamma = -diag[0];
    let mut bb = diag.to_vec();
    bb[0] = diag[0] - gamma;
    bb[n - 1] = diag[n - 1] - alpha * beta / gamma;
    let mut work = vec![0.0; n];
    thomas(lower, &bb, upper, rhs, x, &mut work);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = alpha;
    let mut z = vec![0.0; n];
    thomas(lower, &bb, upper, &u, &mut z, &mut work);
    let fact = (x[0] + beta * x[n - 1] / gamma) / (1.0 + z[0] + beta * z[n - 1] / gamma);
    for (xi, zi) in x.iter_mut().zip(&z) {
        *xi -= fact * zi;
    }
}

fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64], x: &mut [f64], c: &mut [f64]) {
    let n = diag.len();
    let mut bet = diag[0];
    x[0] = rhs[0] / bet;
    for i in 1..n {
        c[i] = upper[i - 1] / bet;
        bet = diag[i] - lower[i] * c[i];
        x[i] = (rhs[i] - lower[i] * x[i - 1]) / bet;
    }
    for i in (0..n - 1).rev() {
        x[i] -= c[i + 1] * x[i + 1];
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
