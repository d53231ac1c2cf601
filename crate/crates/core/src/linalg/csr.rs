use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Compressed sparse row matrix.
///
/// Column indices are sorted within each row and never duplicated.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        for &(i, j, _) in &triplets {
            if i >= n_rows || j >= n_cols {
                return Err(Error::InvalidArgument(format!(
                    "entry ({i}, {j}) outside {n_rows}x{n_cols}"
                )));
            }
        }
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut row_offsets = vec![0usize; n_rows + 1];
        let mut col_indices: Vec<usize> = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_indices.push(j);
                values.push(v);
                row_offsets[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n_rows {
            row_offsets[i + 1] += row_offsets[i];
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Builds a matrix from raw CSR arrays, validating the invariants.
    pub fn try_from_parts(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let bad = |msg: &str| Err(Error::InvalidArgument(format!("invalid CSR arrays: {msg}")));
        if row_offsets.len() != n_rows + 1 || row_offsets[0] != 0 {
            return bad("row offsets length");
        }
        if row_offsets[n_rows] != col_indices.len() || col_indices.len() != values.len() {
            return bad("nnz mismatch");
        }
        for i in 0..n_rows {
            if row_offsets[i] > row_offsets[i + 1] {
                return bad("row offsets not monotone");
            }
            let cols = &col_indices[row_offsets[i]..row_offsets[i + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) || cols.iter().any(|&j| j >= n_cols) {
                return bad("column indices unsorted, duplicated or out of range");
            }
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            row_offsets: vec![0; n_rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_offsets[i]..self.row_offsets[i + 1];
        (&self.col_indices[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols)).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`; panics on dimension mismatch.
    pub fn mul_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols, "spmv: x has wrong length");
        assert_eq!(y.len(), self.n_rows, "spmv: y has wrong length");
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
        }
    }

    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_cols {
            return Err(Error::DimensionMismatch {
                expected: self.n_cols,
                found: x.len(),
            });
        }
        let mut y = vec![0.0; self.n_rows];
        self.mul_into(x, &mut y);
        Ok(y)
    }

    /// `b - A x`.
    pub fn residual(&self, b: &[f64], x: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; self.n_rows];
        self.mul_into(x, &mut r);
        r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
        r
    }

    /// `y = A^T x`.
    pub fn mul_transpose_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_rows);
        assert_eq!(y.len(), self.n_cols);
        y.iter_mut().for_each(|v| *v = 0.0);
        for (i, &xi) in x.iter().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                y[j] += v * xi;
            }
        }
    }

    pub fn transpose(&self) -> Self {
        let t = self.triplets().map(|(i, j, v)| (j, i, v)).collect();
        Self::from_triplets(self.n_cols, self.n_rows, t).expect("indices in range")
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, alpha: f64, other: &Self) -> Result<Self> {
        if (self.n_rows, self.n_cols) != (other.n_rows, other.n_cols) {
            return Err(Error::DimensionMismatch {
                expected: self.n_rows * self.n_cols,
                found: other.n_rows * other.n_cols,
            });
        }
        let t = self
            .triplets()
            .chain(other.triplets().map(|(i, j, v)| (i, j, alpha * v)))
            .collect();
        Self::from_triplets(self.n_rows, self.n_cols, t)
    }

    /// Assembles a block matrix; `None` blocks are zero. Block row heights and
    /// column widths are taken from `row_sizes` / `col_sizes`.
    pub fn from_blocks(
        row_sizes: &[usize],
        col_sizes: &[usize],
        blocks: &[&[Option<(&CsrMatrix, f64)>]],
    ) -> Result<Self> {
        let mut triplets = Vec::new();
        let mut row_off = 0;
        for (bi, brow) in blocks.iter().enumerate() {
            let mut col_off = 0;
            for (bj, block) in brow.iter().enumerate() {
                if let Some((m, scale)) = block {
                    if m.n_rows != row_sizes[bi] || m.n_cols != col_sizes[bj] {
                        return Err(Error::InvalidArgument(format!(
                            "block ({bi}, {bj}) is {}x{}, expected {}x{}",
                            m.n_rows, m.n_cols, row_sizes[bi], col_sizes[bj]
                        )));
                    }
                    triplets.extend(m.triplets().map(|(i, j, v)| (i + row_off, j + col_off, scale * v)));
                }
                col_off += col_sizes[bj];
            }
            row_off += row_sizes[bi];
        }
        Self::from_triplets(row_sizes.iter().sum(), col_sizes.iter().sum(), triplets)
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (i, j, v) in self.triplets() {
            d[i][j] = v;
        }
        d
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |A - A^T| <= tol * max |A|`.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.n_rows != self.n_cols {
            return false;
        }
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        self.triplets()
            .all(|(i, j, v)| (v - self.get(j, i)).abs() <= tol * scale)
    }

    /// Removes entries in the given columns (keeps the shape).
    pub fn drop_columns(&self, mask: &[bool]) -> Self {
        let t = self.triplets().filter(|&(_, j, _)| !mask[j]).collect();
        Self::from_triplets(self.n_rows, self.n_cols, t).expect("indices in range")
    }

    /// MatrixMarket coordinate output, 1-based indices.
    pub fn write_matrix_market<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(out, "{} {} {}", self.n_rows, self.n_cols, self.nnz())?;
        for (i, j, v) in self.triplets() {
            writeln!(out, "{} {} {:e}", i + 1, j + 1, v)?;
        }
        Ok(())
    }

    /// Reads the MatrixMarket `coordinate real general` dialect.
    pub fn read_matrix_market<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty MatrixMarket file".into()))??;
        let h = header.to_ascii_lowercase();
        if !(h.starts_with("%%matrixmarket matrix coordinate real general")) {
            return Err(Error::Parse(format!("unsupported header: {header}")));
        }
        let mut size: Option<(usize, usize, usize)> = None;
        let mut triplets = Vec::new();
        for line in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('%') {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let parse_usize = |s: &str| {
                s.parse::<usize>()
                    .map_err(|e| Error::Parse(format!("bad integer {s:?}: {e}")))
            };
            match size {
                None => {
                    if parts.len() != 3 {
                        return Err(Error::Parse(format!("bad size line: {line}")));
                    }
                    size = Some((parse_usize(parts[0])?, parse_usize(parts[1])?, parse_usize(parts[2])?));
                }
                Some(_) => {
                    if parts.len() != 3 {
                        return Err(Error::Parse(format!("bad entry line: {line}")));
                    }
                    let (i, j) = (parse_usize(parts[0])?, parse_usize(parts[1])?);
                    if i == 0 || j == 0 {
                        return Err(Error::Parse("MatrixMarket indices are 1-based".into()));
                    }
                    let v = parts[2]
                        .parse::<f64>()
                        .map_err(|e| Error::Parse(format!("bad value {:?}: {e}", parts[2])))?;
                    triplets.push((i - 1, j - 1, v));
                }
            }
        }
        let (m, n, nnz) = size.ok_or_else(|| Error::Parse("missing size line".into()))?;
        if triplets.len() != nnz {
            return Err(Error::Parse(format!(
                "expected {nnz} entries, found {}",
                triplets.len()
            )));
        }
        Self::from_triplets(m, n, triplets)
    }
}
