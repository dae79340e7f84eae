#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sidl::matrix::Matrix;
use sidl::sparse::SparseCode;

pub type C = Complex<f64>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// `O(n²)` unitary DFT: `X_k = n^{-1/2} Σ_j x_j e^{-2πi jk/n}`.
pub fn naive_dft(x: &[C]) -> Vec<C> {
    let n = x.len();
    let scale = 1.0 / (n as f64).sqrt();
    (0..n)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(j, &v)| {
                    v * C::from_polar(1.0, -2.0 * std::f64::consts::PI * (j * k) as f64 / n as f64)
                })
                .sum::<C>()
                * scale
        })
        .collect()
}

pub fn naive_dft_columns(m: &Matrix<f64>) -> Matrix<C> {
    let cols: Vec<Vec<C>> = m
        .columns()
        .map(|c| naive_dft(&c.iter().map(|&v| C::new(v, 0.0)).collect::<Vec<_>>()))
        .collect();
    Matrix::from_columns(m.rows(), &cols).unwrap()
}

/// `circ(c)[i][j] = c[(i − j) mod n]`, built entry by entry.
pub fn circ(c: &[f64]) -> DMatrix<f64> {
    let n = c.len();
    DMatrix::from_fn(n, n, |i, j| c[(i + n - j) % n])
}

pub fn to_na(m: &Matrix<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(m.rows(), m.cols(), m.as_slice())
}

pub fn from_na(m: &DMatrix<f64>) -> Matrix<f64> {
    Matrix::from_col_major(m.nrows(), m.ncols(), m.as_slice().to_vec()).unwrap()
}

pub fn vec_of(m: &Matrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// Least-squares solution: Householder QR when `a` has full column rank,
/// SVD otherwise. nalgebra's SVD solve can be off by ~1e-5 relative on
/// well-conditioned tall systems, so it is only the fallback.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if a.nrows() >= a.ncols() {
        let qr = a.clone().qr();
        let r = qr.r();
        let diag: Vec<f64> = r.diagonal().iter().map(|v| v.abs()).collect();
        let top = diag.iter().cloned().fold(0.0, f64::max);
        if top > 0.0 && diag.iter().all(|&d| d > 1e-10 * top) {
            return r.solve_upper_triangular(&(qr.q().transpose() * b)).unwrap();
        }
    }
    a.clone().svd(true, true).solve(b, 1e-13).unwrap()
}

pub fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `‖Y − D X‖²_F` with dense nalgebra arithmetic.
pub fn residual_sq(y: &Matrix<f64>, d: &Matrix<f64>, x: &Matrix<f64>) -> f64 {
    (to_na(y) - to_na(d) * to_na(x)).norm_squared()
}

/// `s`-sparse random code, distinct rows per column.
pub fn random_code(rows: usize, cols: usize, s: usize, rng: &mut ChaCha8Rng) -> Matrix<f64> {
    let mut x = Matrix::zeros(rows, cols);
    for j in 0..cols {
        let mut picked = Vec::new();
        while picked.len() < s {
            let r = rng.random_range(0..rows);
            if !picked.contains(&r) {
                picked.push(r);
            }
        }
        for r in picked {
            let v: f64 = rng.random_range(0.5..1.5);
            x[(r, j)] = if rng.random::<bool>() { v } else { -v };
        }
    }
    x
}

pub fn sparse_from_dense(m: &Matrix<f64>) -> SparseCode<f64> {
    let cols: Vec<Vec<(usize, f64)>> = (0..m.cols())
        .map(|j| {
            m.col(j)
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, &v)| (i, v))
                .collect()
        })
        .collect();
    let s = cols.iter().map(Vec::len).max().unwrap_or(0).max(1);
    SparseCode::from_columns(m.rows(), s, cols).unwrap()
}
