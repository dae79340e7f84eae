//! Solvers for the structured normal equations of the convolutional and
//! wavelet-like dictionary updates: Levinson–Durbin for one symmetric Toeplitz
//! system, Cholesky for block-Toeplitz Gram matrices, and conjugate gradients
//! when the Gram is too large to densify.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::linalg::{cholesky_in_place, cholesky_solve};
use crate::matrix::{dot, Matrix};
use crate::scalar::Real;
use crate::spectral::Fourier;

/// Symmetric Toeplitz matrix given by its first column.
#[derive(Clone, Debug, PartialEq)]
pub struct SymToeplitz<T> {
    first_column: Vec<T>,
}

impl<T: Real> SymToeplitz<T> {
    pub fn new(first_column: Vec<T>) -> Result<Self> {
        if first_column.is_empty() {
            return Err(Error::Size("Toeplitz matrix needs at least one entry".into()));
        }
        Ok(Self { first_column })
    }

    pub fn size(&self) -> usize {
        self.first_column.len()
    }

    pub fn first_column(&self) -> &[T] {
        &self.first_column
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.first_column[i.abs_diff(j)]
    }

    pub fn to_dense(&self) -> Matrix<T> {
        let n = self.size();
        Matrix::from_fn(n, n, |i, j| self.get(i, j))
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let n = self.size();
        (0..n)
            .map(|i| (0..n).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    fn with_ridge(&self, ridge: T) -> Self {
        let mut c = self.first_column.clone();
        c[0] += ridge;
        Self { first_column: c }
    }
}

/// Levinson recursion for `T x = b` with `T` symmetric positive definite Toeplitz.
///
/// Runs in `O(n²)`. A non-positive prediction error means `T` is not positive
/// definite.
pub fn levinson_solve<T: Real>(t: &SymToeplitz<T>, b: &[T]) -> Result<Vec<T>> {
    let n = t.size();
    if b.len() != n {
        return Err(Error::dim(n, b.len()));
    }
    let t0 = t.first_column[0];
    if !(t0 > T::zero()) {
        return Err(Error::NotPositiveDefinite {
            pivot: 0,
            value: t0.as_f64(),
        });
    }
    // work with the unit-diagonal matrix T / t0
    let r: Vec<T> = t.first_column[1..].iter().map(|&v| v / t0).collect();
    let b: Vec<T> = b.iter().map(|&v| v / t0).collect();

    let mut x = vec![T::zero(); n];
    let mut y = vec![T::zero(); n];
    x[0] = b[0];
    if n == 1 {
        return Ok(x);
    }
    y[0] = -r[0];
    let mut alpha = -r[0];
    let mut beta = T::one();
    let mut scratch = vec![T::zero(); n];
    for k in 1..n {
        beta = (T::one() - alpha * alpha) * beta;
        if !(beta > T::zero()) || !beta.is_finite() {
            return Err(Error::NotPositiveDefinite {
                pivot: k,
                value: beta.as_f64(),
            });
        }
        let mut acc = b[k];
        for i in 0..k {
            acc -= r[i] * x[k - 1 - i];
        }
        let mu = acc / beta;
        for i in 0..k {
            scratch[i] = x[i] + mu * y[k - 1 - i];
        }
        x[..k].copy_from_slice(&scratch[..k]);
        x[k] = mu;
        if k < n - 1 {
            let mut acc = -r[k];
            for i in 0..k {
                acc -= r[i] * y[k - 1 - i];
            }
            alpha = acc / beta;
            for i in 0..k {
                scratch[i] = y[i] + alpha * y[k - 1 - i];
            }
            y[..k].copy_from_slice(&scratch[..k]);
            y[k] = alpha;
        }
    }
    Ok(x)
}

/// One general `n × n` Toeplitz block: first column and first row (sharing the corner).
#[derive(Clone, Debug, PartialEq)]
pub struct ToeplitzBlock<T> {
    pub first_column: Vec<T>,
    /// First row without its leading entry, `n - 1` values.
    pub first_row_tail: Vec<T>,
}

impl<T: Real> ToeplitzBlock<T> {
    /// Block whose `(i, j)` entry is `t[(i - j) mod p]` for a length-`p` sequence.
    pub fn from_cyclic_sequence(t: &[T], n: usize) -> Self {
        let p = t.len();
        Self {
            first_column: t[..n].to_vec(),
            first_row_tail: (1..n).map(|d| t[p - d]).collect(),
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        if i >= j {
            self.first_column[i - j]
        } else {
            self.first_row_tail[j - i - 1]
        }
    }
}

/// Symmetric `nL × nL` matrix made of `n × n` Toeplitz blocks.
///
/// Diagonal blocks are symmetric and stored by first column; the upper
/// off-diagonal blocks `(ℓ₁ < ℓ₂)` are stored by first column and first row;
/// the lower blocks are their transposes.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockToeplitzGram<T> {
    blocks: usize,
    block_size: usize,
    diagonal: Vec<SymToeplitz<T>>,
    upper: Vec<ToeplitzBlock<T>>,
}

impl<T: Real> BlockToeplitzGram<T> {
    /// `upper` lists the blocks `(ℓ₁, ℓ₂)`, `ℓ₁ < ℓ₂`, in row-major order.
    pub fn new(diagonal: Vec<SymToeplitz<T>>, upper: Vec<ToeplitzBlock<T>>) -> Result<Self> {
        let blocks = diagonal.len();
        if blocks == 0 {
            return Err(Error::Size("block Gram needs at least one block".into()));
        }
        let n = diagonal[0].size();
        if upper.len() != blocks * (blocks - 1) / 2 {
            return Err(Error::dim(blocks * (blocks - 1) / 2, upper.len()));
        }
        let sizes_ok = diagonal.iter().all(|d| d.size() == n)
            && upper
                .iter()
                .all(|u| u.first_column.len() == n && u.first_row_tail.len() + 1 == n);
        if !sizes_ok {
            return Err(Error::Size("inconsistent Toeplitz block sizes".into()));
        }
        Ok(Self {
            blocks,
            block_size: n,
            diagonal,
            upper,
        })
    }

    /// Block-diagonal identity.
    pub fn identity(blocks: usize, n: usize) -> Self {
        let mut e1 = vec![T::zero(); n];
        e1[0] = T::one();
        let zero = ToeplitzBlock {
            first_column: vec![T::zero(); n],
            first_row_tail: vec![T::zero(); n - 1],
        };
        Self {
            blocks,
            block_size: n,
            diagonal: vec![SymToeplitz { first_column: e1 }; blocks],
            upper: vec![zero; blocks * (blocks - 1) / 2],
        }
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn dim(&self) -> usize {
        self.blocks * self.block_size
    }

    pub fn diagonal_block(&self, l: usize) -> &SymToeplitz<T> {
        &self.diagonal[l]
    }

    fn upper_index(&self, l1: usize, l2: usize) -> usize {
        debug_assert!(l1 < l2);
        l1 * self.blocks - l1 * (l1 + 1) / 2 + (l2 - l1 - 1)
    }

    /// Upper block `(ℓ₁, ℓ₂)` with `ℓ₁ < ℓ₂`.
    pub fn upper_block(&self, l1: usize, l2: usize) -> &ToeplitzBlock<T> {
        &self.upper[self.upper_index(l1, l2)]
    }

    /// Entry `(i, j)` of block `(ℓ₁, ℓ₂)`.
    pub fn block_entry(&self, l1: usize, l2: usize, i: usize, j: usize) -> T {
        use std::cmp::Ordering::*;
        match l1.cmp(&l2) {
            Equal => self.diagonal[l1].get(i, j),
            Less => self.upper_block(l1, l2).get(i, j),
            Greater => self.upper_block(l2, l1).get(j, i),
        }
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        let n = self.block_size;
        self.block_entry(row / n, col / n, row % n, col % n)
    }

    /// Number of stored parameters: `nL + (2n−1)·L(L−1)/2`.
    pub fn parameter_count(&self) -> usize {
        self.diagonal.iter().map(SymToeplitz::size).sum::<usize>()
            + self
                .upper
                .iter()
                .map(|u| u.first_column.len() + u.first_row_tail.len())
                .sum::<usize>()
    }

    pub fn trace(&self) -> T {
        self.diagonal
            .iter()
            .map(|d| d.first_column[0] * T::from_usize_lossy(d.size()))
            .sum()
    }

    pub fn to_dense(&self) -> Matrix<T> {
        let d = self.dim();
        Matrix::from_fn(d, d, |i, j| self.get(i, j))
    }

    /// Matrix-free product, `O(n²L²)`.
    pub fn apply(&self, v: &[T]) -> Vec<T> {
        let n = self.block_size;
        let mut out = vec![T::zero(); self.dim()];
        for l1 in 0..self.blocks {
            for l2 in 0..self.blocks {
                let src = &v[l2 * n..(l2 + 1) * n];
                let dst = &mut out[l1 * n..(l1 + 1) * n];
                for (i, d) in dst.iter_mut().enumerate() {
                    let mut acc = T::zero();
                    for (j, &s) in src.iter().enumerate() {
                        acc += self.block_entry(l1, l2, i, j) * s;
                    }
                    *d += acc;
                }
            }
        }
        out
    }

    pub fn with_ridge(&self, ridge: T) -> Self {
        let mut out = self.clone();
        for d in &mut out.diagonal {
            *d = d.with_ridge(ridge);
        }
        out
    }
}

/// Dense Cholesky solve of the block Gram system.
pub fn block_gram_solve<T: Real>(g: &BlockToeplitzGram<T>, v: &[T]) -> Result<Vec<T>> {
    if v.len() != g.dim() {
        return Err(Error::dim(g.dim(), v.len()));
    }
    let mut dense = g.to_dense();
    cholesky_in_place(&mut dense)?;
    Ok(cholesky_solve(&dense, v))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CgOutcome<T> {
    pub solution: Vec<T>,
    pub iterations: usize,
    pub relative_residual: T,
    pub converged: bool,
}

/// Conjugate gradients for a symmetric positive definite operator.
///
/// Stops when `‖r‖ ≤ tol·‖v‖` or after `max_iter` iterations; the outcome says
/// which. Non-finite values or a non-positive curvature `pᵀAp` (an indefinite
/// operator) are reported as divergence.
pub fn cg_solve<T: Real>(
    apply: impl Fn(&[T]) -> Vec<T>,
    v: &[T],
    tol: T,
    max_iter: usize,
) -> Result<CgOutcome<T>> {
    let dim = v.len();
    let v_norm = dot(v, v).sqrt();
    let mut x = vec![T::zero(); dim];
    if v_norm == T::zero() {
        return Ok(CgOutcome {
            solution: x,
            iterations: 0,
            relative_residual: T::zero(),
            converged: true,
        });
    }
    let mut r = v.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    for it in 1..=max_iter {
        let ap = apply(&p);
        let curvature = dot(&p, &ap);
        if !curvature.is_finite() {
            return Err(Error::Divergence(format!(
                "non-finite curvature at iteration {it}"
            )));
        }
        if !(curvature > T::zero()) {
            return Err(Error::Divergence(format!(
                "non-positive curvature {:e} at iteration {it}; operator is not positive definite",
                curvature.as_f64()
            )));
        }
        let alpha = rr / curvature;
        for i in 0..dim {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        if !rr_new.is_finite() {
            return Err(Error::Divergence(format!(
                "non-finite residual at iteration {it}"
            )));
        }
        let rel = rr_new.sqrt() / v_norm;
        if rel <= tol {
            return Ok(CgOutcome {
                solution: x,
                iterations: it,
                relative_residual: rel,
                converged: true,
            });
        }
        let beta = rr_new / rr;
        for i in 0..dim {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    Ok(CgOutcome {
        solution: x,
        iterations: max_iter,
        relative_residual: rr.sqrt() / v_norm,
        converged: false,
    })
}

/// First `n` entries of `Fᴴ w` for symmetric real weights `w`; the first
/// column of the symmetric Toeplitz matrix `F[:, :n]ᴴ diag(w) F[:, :n]`
/// scaled by `√p`.
pub fn toeplitz_col_from_weights<T: Real>(w: &[T], n: usize) -> Result<Vec<T>> {
    let p = w.len();
    if n > p {
        return Err(Error::Size(format!("support {n} exceeds weight length {p}")));
    }
    let plan = Fourier::new(p)?;
    let buf: Vec<Complex<T>> = w.iter().map(|&x| Complex::new(x, T::zero())).collect();
    let (t, _) = plan.inverse_real(&buf);
    Ok(t[..n].to_vec())
}

/// Routing thresholds for [`solve_gram`].
#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// Use Levinson–Durbin when the Gram has a single block.
    pub levinson_single_block: bool,
    /// Largest `nL` solved by dense Cholesky; above it CG is used.
    pub cholesky_max_dim: usize,
    pub cg_tol: f64,
    /// CG iteration cap as a multiple of `nL`.
    pub cg_max_iter_factor: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            levinson_single_block: true,
            cholesky_max_dim: 512,
            cg_tol: 1e-8,
            cg_max_iter_factor: 10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub enum SolverKind {
    Levinson,
    Cholesky,
    ConjugateGradient,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GramSolution<T> {
    pub solution: Vec<T>,
    pub solver: SolverKind,
    /// Ridge added after a positive-definiteness breakdown, if any.
    pub ridge: Option<T>,
    /// False only when CG stopped at its iteration cap.
    pub converged: bool,
}

/// Solves `G c = v`, choosing the solver by size. On a positive-definiteness
/// breakdown the diagonal is shifted by `1e-10·trace(G)/(nL)` and the solve
/// retried once.
pub fn solve_gram<T: Real>(
    g: &BlockToeplitzGram<T>,
    v: &[T],
    config: &SolverConfig,
) -> Result<GramSolution<T>> {
    let attempt = |g: &BlockToeplitzGram<T>| -> Result<(Vec<T>, SolverKind, bool)> {
        if g.blocks() == 1 && config.levinson_single_block {
            Ok((
                levinson_solve(g.diagonal_block(0), v)?,
                SolverKind::Levinson,
                true,
            ))
        } else if g.dim() <= config.cholesky_max_dim {
            Ok((block_gram_solve(g, v)?, SolverKind::Cholesky, true))
        } else {
            let out = cg_solve(
                |x| g.apply(x),
                v,
                T::lit(config.cg_tol),
                config.cg_max_iter_factor * g.dim(),
            )?;
            Ok((out.solution, SolverKind::ConjugateGradient, out.converged))
        }
    };
    match attempt(g) {
        Ok((solution, solver, converged)) => Ok(GramSolution {
            solution,
            solver,
            ridge: None,
            converged,
        }),
        Err(Error::NotPositiveDefinite { .. }) | Err(Error::Divergence(_)) => {
            let mut ridge = T::lit(1e-10) * g.trace() / T::from_usize_lossy(g.dim());
            if !(ridge > T::zero()) {
                ridge = T::min_positive_value().sqrt();
            }
            let (solution, solver, converged) = attempt(&g.with_ridge(ridge))?;
            Ok(GramSolution {
                solution,
                solver,
                ridge: Some(ridge),
                converged,
            })
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levinson_identity() {
        let t = SymToeplitz::new(vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let b = [1.0f64, -2.0, 3.5, 0.25];
        let x = levinson_solve(&t, &b).unwrap();
        for (a, e) in x.iter().zip(b) {
            assert!((a - e).abs() < 1e-15);
        }
    }

    #[test]
    fn levinson_tridiagonal() {
        let mut c = vec![0.0; 8];
        c[0] = 2.0;
        c[1] = 1.0;
        let t = SymToeplitz::new(c).unwrap();
        let b: Vec<f64> = (0..8).map(|i| (i as f64 * 0.7).sin()).collect();
        let x = levinson_solve(&t, &b).unwrap();
        let r = t.apply(&x);
        for (a, e) in r.iter().zip(&b) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn levinson_detects_indefinite() {
        let t = SymToeplitz::new(vec![1.0, 2.0, 0.0]).unwrap();
        assert!(matches!(
            levinson_solve(&t, &[1.0, 1.0, 1.0]),
            Err(Error::NotPositiveDefinite { .. })
        ));
        let t = SymToeplitz::new(vec![0.0, 0.0]).unwrap();
        assert!(levinson_solve(&t, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn identity_gram_returns_rhs() {
        let g = BlockToeplitzGram::<f64>::identity(3, 4);
        let v: Vec<f64> = (0..12).map(|i| i as f64 - 5.0).collect();
        let x = block_gram_solve(&g, &v).unwrap();
        assert_eq!(x, v);
        assert_eq!(g.parameter_count(), 4 * 3 + 7 * 3);
    }

    #[test]
    fn cg_identity_in_one_step() {
        let v = vec![1.0, 2.0, 3.0];
        let out = cg_solve(|x: &[f64]| x.to_vec(), &v, 1e-12, 10).unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations, 1);
        assert_eq!(out.solution, v);
    }

    #[test]
    fn cg_flags_indefinite_operator() {
        let apply = |x: &[f64]| vec![x[0], -x[1]];
        let out = cg_solve(apply, &[1.0, 1.0], 1e-10, 50);
        match out {
            Err(Error::Divergence(_)) => {}
            Ok(o) => assert!(!o.converged, "indefinite system reported as converged"),
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn flat_weights_give_scaled_identity() {
        let t = toeplitz_col_from_weights(&[1.0f64; 4], 2).unwrap();
        assert!((t[0] - 2.0).abs() < 1e-14 && t[1].abs() < 1e-14);
        let t = toeplitz_col_from_weights(&[4.0f64, 0.0, 0.0, 0.0], 3).unwrap();
        for v in t {
            assert!((v - 2.0).abs() < 1e-14);
        }
        assert!(matches!(
            toeplitz_col_from_weights(&[1.0; 4], 5),
            Err(Error::Size(_))
        ));
    }

    #[test]
    fn ridge_rescues_semidefinite_gram() {
        let g = BlockToeplitzGram::new(
            vec![
                SymToeplitz::new(vec![1.0f64, 0.0]).unwrap(),
                SymToeplitz::new(vec![0.0, 0.0]).unwrap(),
            ],
            vec![ToeplitzBlock {
                first_column: vec![0.0, 0.0],
                first_row_tail: vec![0.0],
            }],
        )
        .unwrap();
        let out = solve_gram(&g, &[1.0, 0.5, 0.0, 0.0], &SolverConfig::default()).unwrap();
        assert!(out.ridge.is_some());
        assert_eq!(out.solver, SolverKind::Cholesky);
        assert!((out.solution[0] - 1.0).abs() < 1e-6);
        assert_eq!(out.solution[2], 0.0);
    }
}
