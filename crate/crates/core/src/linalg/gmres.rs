//! Restarted GMRES with right preconditioning.
//!
//! The system `A M^{-1} y = b` is solved and `x = M^{-1} y` returned, so the
//! monitored residual is the true residual `||b - A x||` of the original
//! system. At the end of every cycle the residual is recomputed explicitly
//! and convergence is only declared on that value.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::operator::{dot, norm2, LinearOperator};
use crate::error::{Error, Result};

/// Hessenberg subdiagonal entries below this count as breakdown.
pub const BREAKDOWN_THRESHOLD: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmresSettings {
    pub abs_tol: f64,
    pub max_iter: usize,
    pub restart: usize,
    /// Interpret `abs_tol` relative to `||b||`.
    pub relative: bool,
}

impl Default for GmresSettings {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            max_iter: 100_000,
            restart: 200,
            relative: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub converged: bool,
    pub iterations: usize,
    /// Seconds spent inside the solver.
    pub wall_time: f64,
    /// Residual estimate after every inner iteration (index 0: initial residual).
    pub residual_history: Vec<f64>,
    /// Explicitly recomputed `||b - A x||`.
    pub final_residual: f64,
    /// Arnoldi broke down (invariant subspace found or stagnation).
    pub breakdown: bool,
    /// Iteration indices at which a restart cycle began.
    pub cycle_starts: Vec<usize>,
}

pub fn gmres(
    op: &dyn LinearOperator,
    b: &[f64],
    precond: &dyn LinearOperator,
    settings: &GmresSettings,
) -> Result<(Vec<f64>, SolveReport)> {
    let n = op.nrows();
    if op.ncols() != n || b.len() != n || precond.nrows() != n || precond.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: if b.len() != n { b.len() } else { precond.nrows() },
        });
    }
    if settings.restart == 0 {
        return Err(Error::InvalidArgument("restart length must be positive".into()));
    }
    let start = Instant::now();
    let tol = if settings.relative {
        settings.abs_tol * norm2(b)
    } else {
        settings.abs_tol
    };

    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut r_norm = norm2(&r);
    let mut history = vec![r_norm];
    let mut cycle_starts = Vec::new();
    let mut iterations = 0;
    let mut breakdown = false;
    let m = settings.restart;

    let mut z = vec![0.0; n];
    let mut w = vec![0.0; n];
    while r_norm >= tol && iterations < settings.max_iter {
        cycle_starts.push(iterations);
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|v| v / r_norm).collect());
        // column-major Hessenberg, column j has j+2 entries
        let mut h: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut cs: Vec<f64> = Vec::with_capacity(m);
        let mut sn: Vec<f64> = Vec::with_capacity(m);
        let mut g = vec![0.0; m + 1];
        g[0] = r_norm;
        let mut inner = 0;
        let mut cycle_breakdown = false;

        for j in 0..m {
            precond.apply_into(&basis[j], &mut z);
            op.apply_into(&z, &mut w);
            let mut col = vec![0.0; j + 2];
            for (i, v) in basis.iter().enumerate() {
                let hij = dot(&w, v);
                col[i] = hij;
                w.iter_mut().zip(v).for_each(|(wk, vk)| *wk -= hij * vk);
            }
            let h_next = norm2(&w);
            col[j + 1] = h_next;
            for i in 0..j {
                let t = cs[i] * col[i] + sn[i] * col[i + 1];
                col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
                col[i] = t;
            }
            let denom = col[j].hypot(col[j + 1]);
            let (c, s) = if denom == 0.0 {
                (1.0, 0.0)
            } else {
                (col[j] / denom, col[j + 1] / denom)
            };
            col[j] = c * col[j] + s * col[j + 1];
            col[j + 1] = 0.0;
            cs.push(c);
            sn.push(s);
            g[j + 1] = -s * g[j];
            g[j] *= c;
            h.push(col);
            inner += 1;
            iterations += 1;
            let estimate = g[j + 1].abs();
            history.push(estimate);

            if h_next < BREAKDOWN_THRESHOLD {
                cycle_breakdown = true;
                break;
            }
            if estimate < tol || iterations >= settings.max_iter {
                break;
            }
            basis.push(w.iter().map(|v| v / h_next).collect());
        }

        // back substitution for the cycle's least-squares solution
        let mut y = vec![0.0; inner];
        for i in (0..inner).rev() {
            let s: f64 = (i + 1..inner).map(|k| h[k][i] * y[k]).sum();
            y[i] = if h[i][i] != 0.0 { (g[i] - s) / h[i][i] } else { 0.0 };
        }
        let mut update = vec![0.0; n];
        for (yi, v) in y.iter().zip(&basis) {
            update.iter_mut().zip(v).for_each(|(u, vk)| *u += yi * vk);
        }
        precond.apply_into(&update, &mut z);
        x.iter_mut().zip(&z).for_each(|(xi, zi)| *xi += zi);

        op.apply_into(&x, &mut w);
        r.iter_mut()
            .zip(b.iter().zip(&w))
            .for_each(|(ri, (bi, wi))| *ri = bi - wi);
        let new_norm = norm2(&r);
        if cycle_breakdown {
            breakdown = true;
            // no further progress possible from this Krylov space
            if new_norm >= tol && new_norm >= r_norm {
                r_norm = new_norm;
                break;
            }
        }
        r_norm = new_norm;
    }

    let report = SolveReport {
        converged: r_norm < tol,
        iterations,
        wall_time: start.elapsed().as_secs_f64(),
        residual_history: history,
        final_residual: r_norm,
        breakdown,
        cycle_starts,
    };
    Ok((x, report))
}
