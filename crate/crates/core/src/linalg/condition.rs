//! Spectral (2-norm) condition numbers of operators.
//!
//! `dense_svd` materializes the operator and takes the ratio of extreme
//! singular values. `iterative` runs Lanczos with full reorthogonalization
//! on `M^T M` for the largest singular value and on `(M^T M)^{-1}`, applied
//! through an LU factorization, for the smallest. The iterative value is an
//! estimate: each extreme eigenvalue is accepted once its Ritz residual bound
//! drops below `rel_tol` relative to the Ritz value.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::csr::CsrMatrix;
use super::direct::lu_factor;
use super::operator::{dot, materialize, norm2, LinearOperator};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CondMode {
    DenseSvd,
    Iterative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CondOptions {
    /// Largest dimension accepted by `DenseSvd`.
    pub dense_cap: usize,
    pub rel_tol: f64,
    pub max_lanczos: usize,
}

impl Default for CondOptions {
    fn default() -> Self {
        Self {
            dense_cap: 6000,
            rel_tol: 1e-6,
            max_lanczos: 400,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CondEstimate {
    /// `sigma_max / sigma_min`, `+inf` for a singular operator.
    pub value: f64,
    pub sigma_max: f64,
    pub sigma_min: f64,
    pub mode: CondMode,
}

impl CondEstimate {
    fn from_extremes(sigma_max: f64, sigma_min: f64, n: usize, mode: CondMode) -> Self {
        let value = if is_singular(sigma_max, sigma_min, n) {
            f64::INFINITY
        } else {
            sigma_max / sigma_min
        };
        Self {
            value,
            sigma_max,
            sigma_min,
            mode,
        }
    }

    fn singular(mode: CondMode) -> Self {
        Self {
            value: f64::INFINITY,
            sigma_max: f64::NAN,
            sigma_min: 0.0,
            mode,
        }
    }
}

fn is_singular(sigma_max: f64, sigma_min: f64, n: usize) -> bool {
    !sigma_min.is_finite()
        || !sigma_max.is_finite()
        || sigma_min <= sigma_max * f64::EPSILON * n.max(1) as f64
}

pub fn estimate_condition_number(
    op: &dyn LinearOperator,
    mode: CondMode,
    opts: &CondOptions,
) -> Result<CondEstimate> {
    let n = op.nrows();
    if op.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: op.ncols(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("empty operator".into()));
    }
    if mode == CondMode::DenseSvd && n > opts.dense_cap {
        return Err(Error::InvalidArgument(format!(
            "dimension {n} exceeds the dense cap {}",
            opts.dense_cap
        )));
    }
    let m = materialize(op);
    dense_matrix_condition(&m, mode, opts)
}

/// Condition number of an explicit dense matrix.
pub fn dense_matrix_condition(m: &Mat<f64>, mode: CondMode, opts: &CondOptions) -> Result<CondEstimate> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: m.ncols(),
        });
    }
    let finite = (0..n).all(|j| (0..n).all(|i| m[(i, j)].is_finite()));
    if !finite {
        return Ok(CondEstimate::singular(mode));
    }
    match mode {
        CondMode::DenseSvd => {
            let s = m
                .singular_values()
                .map_err(|e| Error::SingularMatrix(format!("SVD did not converge: {e:?}")))?;
            Ok(CondEstimate::from_extremes(s[0], s[n - 1], n, mode))
        }
        CondMode::Iterative => {
            let lu = m.partial_piv_lu();
            let u = lu.U();
            let diag: Vec<f64> = (0..n).map(|i| u[(i, i)].abs()).collect();
            let dmax = diag.iter().cloned().fold(0.0, f64::max);
            let dmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
            if is_singular(dmax, dmin, n) {
                return Ok(CondEstimate::singular(mode));
            }
            let mul = |x: &[f64], y: &mut [f64]| {
                let xc = Mat::<f64>::from_fn(n, 1, |i, _| x[i]);
                let t = m * &xc;
                let z = m.transpose() * &t;
                y.iter_mut().enumerate().for_each(|(i, v)| *v = z[(i, 0)]);
            };
            let inv = |x: &[f64], y: &mut [f64]| {
                let mut c = Mat::<f64>::from_fn(n, 1, |i, _| x[i]);
                lu.solve_transpose_in_place(c.as_mut());
                lu.solve_in_place(c.as_mut());
                y.iter_mut().enumerate().for_each(|(i, v)| *v = c[(i, 0)]);
            };
            let lmax = lanczos_largest(n, mul, opts)?;
            let lmin_inv = lanczos_largest(n, inv, opts)?;
            Ok(CondEstimate::from_extremes(
                lmax.sqrt(),
                1.0 / lmin_inv.sqrt(),
                n,
                mode,
            ))
        }
    }
}

/// Condition number of a sparse matrix: dense SVD below the cap, otherwise
/// Lanczos with sparse products and a sparse LU.
pub fn sparse_matrix_condition(a: &CsrMatrix, opts: &CondOptions) -> Result<CondEstimate> {
    let n = a.n_rows();
    if a.n_cols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: a.n_cols(),
        });
    }
    if n <= opts.dense_cap {
        return estimate_condition_number(a, CondMode::DenseSvd, opts);
    }
    let lu = match lu_factor(a) {
        Ok(lu) => lu,
        Err(Error::SingularMatrix(_)) => return Ok(CondEstimate::singular(CondMode::Iterative)),
        Err(e) => return Err(e),
    };
    let mul = |x: &[f64], y: &mut [f64]| {
        let t = a.apply(x);
        a.mul_transpose_into(&t, y);
    };
    let inv = |x: &[f64], y: &mut [f64]| {
        y.copy_from_slice(x);
        lu.solve_transpose_in_place(y);
        lu.solve_in_place(y);
    };
    let lmax = lanczos_largest(n, mul, opts)?;
    let lmin_inv = lanczos_largest(n, inv, opts)?;
    Ok(CondEstimate::from_extremes(
        lmax.sqrt(),
        1.0 / lmin_inv.sqrt(),
        n,
        CondMode::Iterative,
    ))
}

/// Largest eigenvalue of a symmetric positive semidefinite operator.
fn lanczos_largest<F>(n: usize, apply: F, opts: &CondOptions) -> Result<f64>
where
    F: Fn(&[f64], &mut [f64]),
{
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut q: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let qn = norm2(&q);
    q.iter_mut().for_each(|v| *v /= qn);

    let max_steps = opts.max_lanczos.min(n).max(1);
    let mut basis: Vec<Vec<f64>> = vec![q];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    let mut last = 0.0;
    for k in 0..max_steps {
        apply(&basis[k], &mut w);
        let a = dot(&w, &basis[k]);
        alpha.push(a);
        // full reorthogonalization, twice for stability
        for _ in 0..2 {
            for v in &basis {
                let c = dot(&w, v);
                w.iter_mut().zip(v).for_each(|(wi, vi)| *wi -= c * vi);
            }
        }
        let b = norm2(&w);
        let steps = k + 1;
        let exhausted = b <= 1e-14 * a.abs().max(f64::MIN_POSITIVE) || steps == max_steps;
        if exhausted || steps % 10 == 0 || steps <= 3 {
            let (theta, resid) = ritz_largest(&alpha, &beta, b)?;
            if !theta.is_finite() {
                return Ok(f64::INFINITY);
            }
            last = theta;
            if exhausted || resid <= opts.rel_tol * theta.abs() {
                return Ok(theta);
            }
        }
        beta.push(b);
        basis.push(w.iter().map(|v| v / b).collect());
    }
    Ok(last)
}

/// Largest Ritz value of the tridiagonal matrix and its residual bound.
fn ritz_largest(alpha: &[f64], beta: &[f64], b_next: f64) -> Result<(f64, f64)> {
    let k = alpha.len();
    let t = Mat::<f64>::from_fn(k, k, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    let evd = t
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::SingularMatrix(format!("tridiagonal eigensolver: {e:?}")))?;
    let theta = evd.S().column_vector()[k - 1];
    let s_last = evd.U()[(k - 1, k - 1)];
    Ok((theta, (b_next * s_last).abs()))
}
