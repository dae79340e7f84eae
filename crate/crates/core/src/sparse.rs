//! Sparse codes, orthogonal matching pursuit and top-`s` projection.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::cholesky_solve;
use crate::matrix::{dot, norm, Matrix};
use crate::scalar::{abs, Real};

/// Column-sparse `S × N` coefficient matrix.
///
/// Each column stores `(row, value)` pairs sorted by row, at most `sparsity`
/// of them.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseCode<T> {
    n_rows: usize,
    sparsity: usize,
    columns: Vec<Vec<(usize, T)>>,
}

impl<T: Real> SparseCode<T> {
    /// All-zero code.
    pub fn zeros(n_rows: usize, n_cols: usize, sparsity: usize) -> Self {
        Self {
            n_rows,
            sparsity,
            columns: vec![Vec::new(); n_cols],
        }
    }

    /// Builds a code from per-column entries, sorting each column by row.
    pub fn from_columns(n_rows: usize, sparsity: usize, columns: Vec<Vec<(usize, T)>>) -> Result<Self> {
        let mut code = Self::zeros(n_rows, 0, sparsity);
        for col in columns {
            code.columns.push(Self::checked_column(n_rows, sparsity, col)?);
        }
        Ok(code)
    }

    fn checked_column(n_rows: usize, sparsity: usize, mut col: Vec<(usize, T)>) -> Result<Vec<(usize, T)>> {
        col.sort_by_key(|&(r, _)| r);
        if col.len() > sparsity {
            return Err(Error::Contract(format!(
                "column has {} nonzeros, sparsity is {sparsity}",
                col.len()
            )));
        }
        if col.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Contract("duplicate row index in sparse column".into()));
        }
        if col.last().is_some_and(|&(r, _)| r >= n_rows) {
            return Err(Error::Contract(format!("row index out of range 0..{n_rows}")));
        }
        Ok(col)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn sparsity(&self) -> usize {
        self.sparsity
    }

    pub fn column(&self, j: usize) -> &[(usize, T)] {
        &self.columns[j]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[(usize, T)]> {
        self.columns.iter().map(Vec::as_slice)
    }

    pub fn set_column(&mut self, j: usize, col: Vec<(usize, T)>) -> Result<()> {
        self.columns[j] = Self::checked_column(self.n_rows, self.sparsity, col)?;
        Ok(())
    }

    /// Total number of stored entries.
    pub fn nnz(&self) -> usize {
        self.columns.iter().map(Vec::len).sum()
    }

    pub fn to_dense(&self) -> Matrix<T> {
        let mut m = Matrix::zeros(self.n_rows, self.n_cols());
        for (j, col) in self.columns.iter().enumerate() {
            for &(r, v) in col {
                m[(r, j)] = v;
            }
        }
        m
    }

    /// Dense rows `start..start + len` as a `len × N` matrix.
    pub fn dense_rows(&self, start: usize, len: usize) -> Matrix<T> {
        let mut m = Matrix::zeros(len, self.n_cols());
        for (j, col) in self.columns.iter().enumerate() {
            for &(r, v) in col {
                if r >= start && r < start + len {
                    m[(r - start, j)] = v;
                }
            }
        }
        m
    }

    /// Squared Frobenius norm of each consecutive block of `block` rows.
    pub fn block_energy(&self, block: usize) -> Vec<T> {
        let mut e = vec![T::zero(); self.n_rows.div_ceil(block)];
        for col in &self.columns {
            for &(r, v) in col {
                e[r / block] += v * v;
            }
        }
        e
    }

    /// Multiplies rows `start..start + len` by `factor`.
    pub fn scale_rows(&mut self, start: usize, len: usize, factor: T) {
        for col in &mut self.columns {
            for (r, v) in col.iter_mut() {
                if *r >= start && *r < start + len {
                    *v *= factor;
                }
            }
        }
    }

    /// Multiplies row `r` by `factors[r]`.
    pub fn scale_each_row(&mut self, factors: &[T]) {
        for col in &mut self.columns {
            for (r, v) in col.iter_mut() {
                *v *= factors[*r];
            }
        }
    }

    /// `D X` for a dense dictionary `D` with `n_rows` columns.
    pub fn synthesize(&self, d: &Matrix<T>) -> Result<Matrix<T>> {
        if d.cols() != self.n_rows {
            return Err(Error::dim(
                format!("{} dictionary columns", self.n_rows),
                d.cols(),
            ));
        }
        let mut out = Matrix::zeros(d.rows(), self.n_cols());
        for (j, col) in self.columns.iter().enumerate() {
            let dst = out.col_mut(j);
            for &(r, v) in col {
                for (o, &a) in dst.iter_mut().zip(d.col(r)) {
                    *o += a * v;
                }
            }
        }
        Ok(out)
    }

    /// Copy keeping only the rows for which `keep` holds.
    pub fn filter_rows(&self, keep: impl Fn(usize) -> bool) -> Self {
        let columns = self
            .columns
            .iter()
            .map(|col| col.iter().copied().filter(|&(r, _)| keep(r)).collect())
            .collect();
        Self {
            n_rows: self.n_rows,
            sparsity: self.sparsity,
            columns,
        }
    }

    /// Copy without explicitly stored zeros.
    pub fn without_zeros(&self) -> Self {
        let columns = self
            .columns
            .iter()
            .map(|col| col.iter().copied().filter(|&(_, v)| v != T::zero()).collect())
            .collect();
        Self {
            n_rows: self.n_rows,
            sparsity: self.sparsity,
            columns,
        }
    }

    /// Number of stored entries in each row.
    pub fn row_counts(&self) -> Vec<usize> {
        let mut h = vec![0; self.n_rows];
        for col in &self.columns {
            for &(r, _) in col {
                h[r] += 1;
            }
        }
        h
    }
}

/// Dictionary columns eligible for selection.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShiftMask {
    allowed: Vec<bool>,
}

impl ShiftMask {
    pub fn new(allowed: Vec<bool>) -> Result<Self> {
        if !allowed.iter().any(|&a| a) {
            return Err(Error::Contract("shift mask allows no column".into()));
        }
        Ok(Self { allowed })
    }

    /// For a union of `blocks` circulants of size `n`, allows the first `q` shifts of each.
    pub fn first_shifts(blocks: usize, n: usize, q: usize) -> Result<Self> {
        Self::new((0..blocks * n).map(|i| i % n < q).collect())
    }

    pub fn len(&self) -> usize {
        self.allowed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.allowed.is_empty()
    }

    pub fn is_allowed(&self, column: usize) -> bool {
        self.allowed[column]
    }
}

fn norm_tolerance<T: Real>() -> T {
    T::lit(1e-8).max(T::epsilon() * T::lit(100.0))
}

fn validate<T: Real>(d: &Matrix<T>, s: usize, mask: Option<&ShiftMask>) -> Result<()> {
    if s > d.rows() {
        return Err(Error::Contract(format!(
            "sparsity {s} exceeds signal length {}",
            d.rows()
        )));
    }
    if let Some(m) = mask {
        if m.len() != d.cols() {
            return Err(Error::dim(format!("mask of length {}", d.cols()), m.len()));
        }
    }
    let tol = norm_tolerance::<T>();
    for (j, col) in d.columns().enumerate() {
        let nrm = norm(col);
        if !(abs(nrm - T::one()) <= tol) {
            return Err(Error::Contract(format!(
                "dictionary column {j} has norm {nrm}, expected 1"
            )));
        }
    }
    Ok(())
}

/// Orthogonal matching pursuit with `s` atoms.
///
/// `d` must have unit-norm columns. Ties in the selection go to the lowest
/// column index. The pursuit stops early when the residual falls below
/// `1e-12·‖y‖` or no remaining atom correlates with it.
pub fn omp<T: Real>(d: &Matrix<T>, y: &[T], s: usize, mask: Option<&ShiftMask>) -> Result<Vec<(usize, T)>> {
    if y.len() != d.rows() {
        return Err(Error::dim(d.rows(), y.len()));
    }
    validate(d, s, mask)?;
    Ok(omp_column(d, y, s, mask))
}

fn omp_column<T: Real>(d: &Matrix<T>, y: &[T], s: usize, mask: Option<&ShiftMask>) -> Vec<(usize, T)> {
    let y_norm = norm(y);
    if y_norm == T::zero() || s == 0 {
        return Vec::new();
    }
    let stop = T::lit(1e-12) * y_norm;
    let mut support: Vec<usize> = Vec::with_capacity(s);
    let mut chol = Matrix::<T>::zeros(s, s);
    let mut rhs: Vec<T> = Vec::with_capacity(s);
    let mut coef: Vec<T> = Vec::new();
    let mut residual = y.to_vec();
    let mut taken = vec![false; d.cols()];
    while support.len() < s {
        let mut best = None;
        let mut best_val = T::zero();
        for (j, col) in d.columns().enumerate() {
            if taken[j] || mask.is_some_and(|m| !m.is_allowed(j)) {
                continue;
            }
            let c = abs(dot(col, &residual));
            if c > best_val {
                best_val = c;
                best = Some(j);
            }
        }
        let Some(j) = best else { break };
        // extend the Cholesky factor of the support Gram by one row
        let k = support.len();
        let atom = d.col(j);
        let mut row: Vec<T> = support.iter().map(|&i| dot(d.col(i), atom)).collect();
        for i in 0..k {
            let mut v = row[i];
            for t in 0..i {
                v -= chol[(i, t)] * row[t];
            }
            row[i] = v / chol[(i, i)];
        }
        let diag = dot(atom, atom) - row.iter().map(|&v| v * v).sum::<T>();
        if !(diag > T::epsilon() * T::lit(16.0)) {
            // atom lies in the span of the current support
            taken[j] = true;
            continue;
        }
        for (t, &v) in row.iter().enumerate() {
            chol[(k, t)] = v;
        }
        chol[(k, k)] = diag.sqrt();
        support.push(j);
        taken[j] = true;
        rhs.push(dot(atom, y));

        let sub = Matrix::from_fn(k + 1, k + 1, |a, b| chol[(a, b)]);
        coef = cholesky_solve(&sub, &rhs);
        residual.copy_from_slice(y);
        for (&i, &a) in support.iter().zip(&coef) {
            for (r, &v) in residual.iter_mut().zip(d.col(i)) {
                *r -= a * v;
            }
        }
        if norm(&residual) < stop {
            break;
        }
    }
    let mut out: Vec<(usize, T)> = support.into_iter().zip(coef).collect();
    out.sort_by_key(|&(r, _)| r);
    out
}

/// Column-wise [`omp`] over `Y`, in parallel. The result does not depend on
/// the thread count.
pub fn omp_batch<T: Real>(
    d: &Matrix<T>,
    y: &Matrix<T>,
    s: usize,
    mask: Option<&ShiftMask>,
) -> Result<SparseCode<T>> {
    if y.rows() != d.rows() {
        return Err(Error::dim(format!("{} rows", d.rows()), y.rows()));
    }
    validate(d, s, mask)?;
    let columns: Vec<Vec<(usize, T)>> = (0..y.cols())
        .into_par_iter()
        .map(|j| omp_column(d, y.col(j), s, mask))
        .collect();
    Ok(SparseCode {
        n_rows: d.cols(),
        sparsity: s,
        columns,
    })
}

/// Keeps the `s` largest-magnitude entries of every column (ties to the lower
/// row). Exact zeros are not stored.
pub fn project_topk<T: Real>(m: &Matrix<T>, s: usize) -> SparseCode<T> {
    let s_eff = s.min(m.rows());
    let columns = m
        .columns()
        .map(|col| {
            let mut idx: Vec<usize> = (0..col.len()).collect();
            idx.sort_by(|&a, &b| {
                abs(col[b])
                    .partial_cmp(&abs(col[a]))
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            });
            let mut keep: Vec<(usize, T)> = idx[..s_eff]
                .iter()
                .filter(|&&i| col[i] != T::zero())
                .map(|&i| (i, col[i]))
                .collect();
            keep.sort_by_key(|&(r, _)| r);
            keep
        })
        .collect();
    SparseCode {
        n_rows: m.rows(),
        sparsity: s,
        columns,
    }
}
