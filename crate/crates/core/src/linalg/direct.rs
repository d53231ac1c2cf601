//! Direct LU factorization.
//!
//! Small systems use a dense partial-pivoting LU with an explicit pivot test;
//! larger ones go through faer's sparse LU (fill-reducing ordering). The
//! sparse path has no pivot threshold, so a probe solve is used to reject
//! numerically singular matrices.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use super::csr::CsrMatrix;
use super::operator::{norm2, LinearOperator};
use crate::error::{Error, Result};

/// Systems smaller than this are factorized densely.
pub const DENSE_LU_THRESHOLD: usize = 400;

/// Relative pivot threshold of the dense path.
pub const PIVOT_TOLERANCE: f64 = 1e-14;

pub struct LuFactorization {
    n: usize,
    inner: Inner,
}

enum Inner {
    Dense(DenseLu),
    Sparse(Lu<usize, f64>),
}

impl std::fmt::Debug for LuFactorization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.inner {
            Inner::Dense(_) => "dense",
            Inner::Sparse(_) => "sparse",
        };
        f.debug_struct("LuFactorization")
            .field("n", &self.n)
            .field("kind", &kind)
            .finish()
    }
}

pub fn lu_factor(a: &CsrMatrix) -> Result<LuFactorization> {
    if a.n_rows() != a.n_cols() {
        return Err(Error::DimensionMismatch {
            expected: a.n_rows(),
            found: a.n_cols(),
        });
    }
    let n = a.n_rows();
    let inner = if n < DENSE_LU_THRESHOLD {
        Inner::Dense(DenseLu::factor(a.to_dense())?)
    } else {
        Inner::Sparse(sparse_lu(a)?)
    };
    Ok(LuFactorization { n, inner })
}

fn sparse_lu(a: &CsrMatrix) -> Result<Lu<usize, f64>> {
    let n = a.n_rows();
    let triplets: Vec<_> = a.triplets().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
    let m = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
        .map_err(|e| Error::InvalidArgument(format!("sparse matrix construction: {e:?}")))?;
    let lu = m
        .sp_lu()
        .map_err(|e| Error::SingularMatrix(format!("sparse LU failed: {e:?}")))?;

    let probe: Vec<f64> = (0..n).map(|i| 1.0 + (i % 7) as f64 / 7.0).collect();
    let rhs = a.spmv(&probe)?;
    let mut x = Mat::<f64>::from_fn(n, 1, |i, _| rhs[i]);
    lu.solve_in_place(x.as_mut());
    let err: Vec<f64> = (0..n).map(|i| x[(i, 0)] - probe[i]).collect();
    let rel = norm2(&err) / norm2(&probe);
    if !rel.is_finite() || rel > 1e-4 {
        return Err(Error::SingularMatrix(format!(
            "sparse LU probe solve error {rel:e}"
        )));
    }
    Ok(lu)
}

impl LuFactorization {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.n, "LU solve: rhs has wrong length");
        match &self.inner {
            Inner::Dense(d) => d.solve_in_place(x),
            Inner::Sparse(lu) => {
                let mut m = Mat::<f64>::from_fn(self.n, 1, |i, _| x[i]);
                lu.solve_in_place(m.as_mut());
                x.iter_mut().enumerate().for_each(|(i, v)| *v = m[(i, 0)]);
            }
        }
    }

    /// Solves `A^T x = b` in place.
    pub fn solve_transpose_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        match &self.inner {
            Inner::Dense(d) => d.solve_transpose_in_place(x),
            Inner::Sparse(lu) => {
                let mut m = Mat::<f64>::from_fn(self.n, 1, |i, _| x[i]);
                lu.solve_transpose_in_place(m.as_mut());
                x.iter_mut().enumerate().for_each(|(i, v)| *v = m[(i, 0)]);
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: b.len(),
            });
        }
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        Ok(x)
    }
}

impl LinearOperator for LuFactorization {
    fn nrows(&self) -> usize {
        self.n
    }

    fn ncols(&self) -> usize {
        self.n
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
        self.solve_in_place(y);
    }
}

/// Row-major dense LU with partial pivoting, `P A = L U`.
#[derive(Debug, Clone)]
pub(crate) struct DenseLu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl DenseLu {
    pub(crate) fn factor(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut lu: Vec<f64> = rows.into_iter().flatten().collect();
        assert_eq!(lu.len(), n * n, "dense LU needs a square matrix");
        let scale = lu.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tiny = PIVOT_TOLERANCE * scale;
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu[i * n + k].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pmax <= tiny || scale == 0.0 {
                return Err(Error::SingularMatrix(format!(
                    "pivot {pmax:e} at column {k} below {tiny:e}"
                )));
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = lu[k * n + k];
            for i in k + 1..n {
                let f = lu[i * n + k] / pivot;
                lu[i * n + k] = f;
                if f != 0.0 {
                    for j in k + 1..n {
                        lu[i * n + j] -= f * lu[k * n + j];
                    }
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    pub(crate) fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.n;
        let b: Vec<f64> = self.perm.iter().map(|&p| x[p]).collect();
        x.copy_from_slice(&b);
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.lu[i * n + j] * x[j]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| self.lu[i * n + j] * x[j]).sum();
            x[i] = (x[i] - s) / self.lu[i * n + i];
        }
    }

    // A^T = U^T L^T P
    pub(crate) fn solve_transpose_in_place(&self, x: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.lu[j * n + i] * x[j]).sum();
            x[i] = (x[i] - s) / self.lu[i * n + i];
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| self.lu[j * n + i] * x[j]).sum();
            x[i] -= s;
        }
        let mut out = vec![0.0; n];
        for (k, &p) in self.perm.iter().enumerate() {
            out[p] = x[k];
        }
        x.copy_from_slice(&out);
    }
}
