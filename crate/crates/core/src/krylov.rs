//! Matrix-free Krylov solvers with right preconditioning.

use crate::linalg::{dot, norm2};

pub trait LinearOperator {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// Approximate inverse `z ≈ M⁻¹ r`.
pub trait Preconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

pub struct IdentityPreconditioner;

impl Preconditioner for IdentityPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

/// Inverse of a stored diagonal.
pub struct Jacobi {
    inv: Vec<f64>,
}

impl Jacobi {
    pub fn new(diag: &[f64]) -> Self {
        Self {
            inv: diag.iter().map(|d| if *d != 0.0 { 1.0 / d } else { 1.0 }).collect(),
        }
    }
}

impl Preconditioner for Jacobi {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for ((zi, ri), di) in z.iter_mut().zip(r).zip(&self.inv) {
            *zi = ri * di;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovOptions {
    /// Relative residual target `‖b − Ax‖ ≤ tol·‖b‖`.
    pub tol: f64,
    pub max_iter: usize,
    pub restart: usize,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 5000,
            restart: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrylovOutcome {
    pub iterations: usize,
    /// Final true relative residual.
    pub residual: f64,
    pub history: Vec<f64>,
    pub converged: bool,
}

fn true_residual<A: LinearOperator>(op: &A, b: &[f64], x: &[f64], r: &mut [f64]) -> f64 {
    op.apply(x, r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    norm2(r)
}

/// Right-preconditioned BiCGStab. `x` holds the initial guess on entry.
pub fn bicgstab<A: LinearOperator, P: Preconditioner>(
    op: &A,
    prec: &P,
    b: &[f64],
    x: &mut [f64],
    opts: &KrylovOptions,
) -> KrylovOutcome {
    let n = op.len();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return KrylovOutcome {
            iterations: 0,
            residual: 0.0,
            history: vec![0.0],
            converged: true,
        };
    }
    let mut r = vec![0.0; n];
    let mut rnorm = true_residual(op, b, x, &mut r);
    let mut history = vec![rnorm / bnorm];
    if rnorm <= opts.tol * bnorm {
        return KrylovOutcome {
            iterations: 0,
            residual: rnorm / bnorm,
            history,
            converged: true,
        };
    }
    let mut r_hat = r.clone();
    let (mut p, mut v) = (vec![0.0; n], vec![0.0; n]);
    let (mut p_hat, mut s, mut s_hat, mut t) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut it = 0;
    while it < opts.max_iter {
        it += 1;
        let rho_new = dot(&r_hat, &r);
        if rho_new.abs() < 1e-300 || omega == 0.0 {
            // Breakdown: restart the shadow space from the current residual.
            r_hat.copy_from_slice(&r);
            p.iter_mut().for_each(|v| *v = 0.0);
            v.iter_mut().for_each(|v| *v = 0.0);
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            if dot(&r_hat, &r).abs() < 1e-300 {
                break;
            }
            continue;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        prec.apply(&p, &mut p_hat);
        op.apply(&p_hat, &mut v);
        let den = dot(&r_hat, &v);
        if den.abs() < 1e-300 {
            omega = 0.0;
            continue;
        }
        alpha = rho / den;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm2(&s) <= opts.tol * bnorm {
            for i in 0..n {
                x[i] += alpha * p_hat[i];
            }
            rnorm = true_residual(op, b, x, &mut r);
            history.push(rnorm / bnorm);
            if rnorm <= opts.tol * bnorm {
                break;
            }
            continue;
        }
        prec.apply(&s, &mut s_hat);
        op.apply(&s_hat, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * p_hat[i] + omega * s_hat[i];
            r[i] = s[i] - omega * t[i];
        }
        rnorm = norm2(&r);
        history.push(rnorm / bnorm);
        if rnorm <= opts.tol * bnorm {
            rnorm = true_residual(op, b, x, &mut r);
            if rnorm <= opts.tol * bnorm {
                break;
            }
        }
    }
    let rnorm = true_residual(op, b, x, &mut r);
    KrylovOutcome {
        iterations: it,
        residual: rnorm / bnorm,
        history,
        converged: rnorm <= opts.tol * bnorm,
    }
}

/// Restarted, right-preconditioned GMRES. `x` holds the initial guess.
pub fn gmres<A: LinearOperator, P: Preconditioner>(
    op: &A,
    prec: &P,
    b: &[f64],
    x: &mut [f64],
    opts: &KrylovOptions,
) -> KrylovOutcome {
    let n = op.len();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return KrylovOutcome {
            iterations: 0,
            residual: 0.0,
            history: vec![0.0],
            converged: true,
        };
    }
    let m = opts.restart.max(1);
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut history = Vec::new();
    let mut total = 0;
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    let mut hess = vec![vec![0.0; m]; m + 1];
    let (mut cs, mut sn, mut g) = (vec![0.0; m], vec![0.0; m], vec![0.0; m + 1]);

    loop {
        let beta = true_residual(op, b, x, &mut r);
        history.push(beta / bnorm);
        if beta <= opts.tol * bnorm || total >= opts.max_iter {
            return KrylovOutcome {
                iterations: total,
                residual: beta / bnorm,
                history,
                converged: beta <= opts.tol * bnorm,
            };
        }
        basis.clear();
        basis.push(r.iter().map(|v| v / beta).collect());
        g.iter_mut().for_each(|v| *v = 0.0);
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            prec.apply(&basis[k], &mut z);
            op.apply(&z, &mut w);
            for (j, vj) in basis.iter().enumerate() {
                let hjk = dot(&w, vj);
                hess[j][k] = hjk;
                for (wi, vi) in w.iter_mut().zip(vj) {
                    *wi -= hjk * vi;
                }
            }
            let hn = norm2(&w);
            hess[k + 1][k] = hn;
            for j in 0..k {
                let tmp = cs[j] * hess[j][k] + sn[j] * hess[j + 1][k];
                hess[j + 1][k] = -sn[j] * hess[j][k] + cs[j] * hess[j + 1][k];
                hess[j][k] = tmp;
            }
            let den = (hess[k][k] * hess[k][k] + hess[k + 1][k] * hess[k + 1][k]).sqrt();
            if den == 0.0 {
                cs[k] = 1.0;
                sn[k] = 0.0;
            } else {
                cs[k] = hess[k][k] / den;
                sn[k] = hess[k + 1][k] / den;
            }
            hess[k][k] = cs[k] * hess[k][k] + sn[k] * hess[k + 1][k];
            hess[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            total += 1;
            k_used = k + 1;
            history.push(g[k + 1].abs() / bnorm);
            if g[k + 1].abs() <= opts.tol * bnorm * 0.5 || hn == 0.0 || total >= opts.max_iter {
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut acc = g[i];
            for j in i + 1..k_used {
                acc -= hess[i][j] * y[j];
            }
            y[i] = if hess[i][i] != 0.0 { acc / hess[i][i] } else { 0.0 };
        }
        w.iter_mut().for_each(|v| *v = 0.0);
        for (j, yj) in y.iter().enumerate() {
            for (wi, vi) in w.iter_mut().zip(&basis[j]) {
                *wi += yj * vi;
            }
        }
        prec.apply(&w, &mut z);
        for (xi, zi) in x.iter_mut().zip(&z) {
            *xi += zi;
        }
    }
}

/// BiCGStab, falling back to restarted GMRES from the BiCGStab iterate
/// when the former stalls.
pub fn solve<A: LinearOperator, P: Preconditioner>(
    op: &A,
    prec: &P,
    b: &[f64],
    x: &mut [f64],
    opts: &KrylovOptions,
) -> KrylovOutcome {
    let first = bicgstab(op, prec, b, x, opts);
    if first.converged {
        return first;
    }
    if !x.iter().all(|v| v.is_finite()) {
        x.iter_mut().for_each(|v| *v = 0.0);
    }
    let mut second = gmres(op, prec, b, x, opts);
    let mut history = first.history;
    history.extend(second.history);
    second.history = history;
    second.iterations += first.iterations;
    second
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Dense {
        n: usize,
        m: Vec<f64>,
    }

    impl LinearOperator for Dense {
        fn len(&self) -> usize {
            self.n
        }
        fn apply(&self, x: &[f64], y: &mut [f64]) {
            for i in 0..self.n {
                y[i] = (0..self.n).map(|j| self.m[i * self.n + j] * x[j]).sum();
            }
        }
    }

    fn nonsymmetric(n: usize) -> Dense {
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            m[i * n + i] = 4.0 + (i % 3) as f64;
            m[i * n + (i + 1) % n] = -1.5;
            m[i * n + (i + n - 1) % n] = -0.5;
            m[i * n + (i + 7) % n] += 0.3;
        }
        Dense { n, m }
    }

    #[test]
    fn both_solvers_reach_tolerance() {
        let op = nonsymmetric(40);
        let b: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).cos()).collect();
        let diag: Vec<f64> = (0..40).map(|i| op.m[i * 40 + i]).collect();
        let opts = KrylovOptions {
            tol: 1e-12,
            ..Default::default()
        };
        for which in 0..2 {
            let mut x = vec![0.0; 40];
            let out = if which == 0 {
                bicgstab(&op, &Jacobi::new(&diag), &b, &mut x, &opts)
            } else {
                gmres(
                    &op,
                    &Jacobi::new(&diag),
                    &b,
                    &mut x,
                    &KrylovOptions { restart: 7, ..opts },
                )
            };
            assert!(out.converged, "solver {which}: {out:?}");
            let mut r = vec![0.0; 40];
            op.apply(&x, &mut r);
            let err: f64 = r.iter().zip(&b).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
            assert!(err < 1e-10);
        }
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let op = nonsymmetric(10);
        let mut x = vec![1.0; 10];
        let out = solve(
            &op,
            &IdentityPreconditioner,
            &[0.0; 10],
            &mut x,
            &KrylovOptions::default(),
        );
        assert!(out.converged);
        assert!(x.iter().all(|v| *v == 0.0));
    }
}
