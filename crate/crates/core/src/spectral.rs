//! FFT-backed circulant algebra.
//!
//! The Fourier matrix is unitary throughout: `F c = FFT(c) / √n`. A circulant
//! `C = circ(c)` factors as `C = Fᴴ diag(σ) F` with eigenvalues `σ = √n F c`,
//! i.e. the *unnormalized* DFT of its first column. [`Spectrum`] stores `σ`
//! with that scaling.

use std::fmt;
use std::sync::{Arc, OnceLock};

use num_complex::Complex;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::{abs, Real};

const PAR_CHUNK_COLS: usize = 256;

/// Planned unitary forward and inverse transforms of one length.
#[derive(Clone)]
pub struct Fourier<T: Real> {
    len: usize,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
    scale: T,
}

impl<T: Real> fmt::Debug for Fourier<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fourier").field("len", &self.len).finish()
    }
}

impl<T: Real> Fourier<T> {
    pub fn new(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::Size("transform length must be positive".into()));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
            scale: T::one() / T::from_usize_lossy(len).sqrt(),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Unitary forward transform of every length-`len` chunk of `buf`.
    pub fn forward_in_place(&self, buf: &mut [Complex<T>]) {
        run_chunks(&*self.forward, buf, self.len, self.scale);
    }

    /// Unitary inverse transform of every length-`len` chunk of `buf`.
    pub fn inverse_in_place(&self, buf: &mut [Complex<T>]) {
        run_chunks(&*self.inverse, buf, self.len, self.scale);
    }

    pub fn forward_real(&self, x: &[T]) -> Vec<Complex<T>> {
        let mut buf: Vec<Complex<T>> = x.iter().map(|&v| Complex::new(v, T::zero())).collect();
        self.forward_in_place(&mut buf);
        buf
    }

    /// Inverse transform of a conjugate-symmetric vector. Returns the real part
    /// and the largest discarded imaginary magnitude.
    pub fn inverse_real(&self, x: &[Complex<T>]) -> (Vec<T>, T) {
        let mut buf = x.to_vec();
        self.inverse_in_place(&mut buf);
        split_real(buf)
    }

    /// Column-wise unitary transform of a real matrix with `len` rows.
    pub fn columns(&self, m: &Matrix<T>) -> Result<Matrix<Complex<T>>> {
        if m.rows() != self.len {
            return Err(Error::dim(format!("{} rows", self.len), m.rows()));
        }
        let mut out = m.map(|v| Complex::new(v, T::zero()));
        self.forward_in_place(out.as_mut_slice());
        Ok(out)
    }
}

fn run_chunks<T: Real>(fft: &dyn Fft<T>, buf: &mut [Complex<T>], len: usize, scale: T) {
    if buf.is_empty() {
        return;
    }
    debug_assert_eq!(buf.len() % len, 0);
    buf.par_chunks_mut(len * PAR_CHUNK_COLS).for_each(|chunk| {
        fft.process(chunk);
        for v in chunk.iter_mut() {
            *v *= scale;
        }
    });
}

fn split_real<T: Real>(buf: Vec<Complex<T>>) -> (Vec<T>, T) {
    let residue = buf.iter().map(|c| abs(c.im)).fold(T::zero(), T::max);
    (buf.into_iter().map(|c| c.re).collect(), residue)
}

/// Unitary FFT of every column of `m`.
pub fn fft_columns<T: Real>(m: &Matrix<T>) -> Result<Matrix<Complex<T>>> {
    if m.is_empty() {
        return Err(Error::Size("cannot transform an empty matrix".into()));
    }
    Fourier::new(m.rows())?.columns(m)
}

/// Unitary inverse FFT of every column of `m`.
pub fn ifft_columns<T: Real>(m: &Matrix<Complex<T>>) -> Result<Matrix<Complex<T>>> {
    if m.is_empty() {
        return Err(Error::Size("cannot transform an empty matrix".into()));
    }
    let plan = Fourier::new(m.rows())?;
    let mut out = m.clone();
    plan.inverse_in_place(out.as_mut_slice());
    Ok(out)
}

/// Eigenvalues `σ = √n F c` of a real circulant.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum<T> {
    values: Vec<Complex<T>>,
}

impl<T: Real> Spectrum<T> {
    pub fn from_generator(c: &[T]) -> Result<Self> {
        let plan = Fourier::new(c.len())?;
        let sqrt_n = T::from_usize_lossy(c.len()).sqrt();
        let values = plan.forward_real(c).into_iter().map(|v| v * sqrt_n).collect();
        Ok(Self { values })
    }

    /// Wraps raw eigenvalues. No symmetry is enforced; see
    /// [`Spectrum::is_conjugate_symmetric`].
    pub fn from_values(values: Vec<Complex<T>>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Size("empty spectrum".into()));
        }
        Ok(Self { values })
    }

    pub fn size(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[Complex<T>] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex<T>> {
        self.values
    }

    pub fn norm(&self) -> T {
        self.values.iter().map(|v| v.norm_sqr()).sum::<T>().sqrt()
    }

    /// `values[n-k] == conj(values[k])` and `values[0]` real, within `tol`.
    pub fn is_conjugate_symmetric(&self, tol: T) -> bool {
        let n = self.values.len();
        if abs(self.values[0].im) > tol {
            return false;
        }
        (1..n).all(|k| (self.values[n - k] - self.values[k].conj()).norm() <= tol)
    }

    /// First column `c = Fᴴ σ / √n` and the discarded imaginary residue.
    pub fn generator_with_residue(&self) -> Result<(Vec<T>, T)> {
        let plan = Fourier::new(self.values.len())?;
        let (mut c, residue) = plan.inverse_real(&self.values);
        let inv_sqrt_n = T::one() / T::from_usize_lossy(self.values.len()).sqrt();
        for v in &mut c {
            *v *= inv_sqrt_n;
        }
        Ok((c, residue * inv_sqrt_n))
    }

    pub fn generator(&self) -> Result<Vec<T>> {
        Ok(self.generator_with_residue()?.0)
    }
}

/// A real circulant matrix held by its first column; the spectrum is computed on demand.
#[derive(Debug)]
pub struct CirculantOperator<T: Real> {
    first_column: Vec<T>,
    spectrum: OnceLock<Spectrum<T>>,
}

impl<T: Real> Clone for CirculantOperator<T> {
    fn clone(&self) -> Self {
        Self {
            first_column: self.first_column.clone(),
            spectrum: self.spectrum.clone(),
        }
    }
}

impl<T: Real> CirculantOperator<T> {
    pub fn new(first_column: Vec<T>) -> Result<Self> {
        if first_column.is_empty() {
            return Err(Error::Size("circulant generator must be non-empty".into()));
        }
        Ok(Self {
            first_column,
            spectrum: OnceLock::new(),
        })
    }

    pub fn size(&self) -> usize {
        self.first_column.len()
    }

    pub fn first_column(&self) -> &[T] {
        &self.first_column
    }

    pub fn spectrum(&self) -> &Spectrum<T> {
        self.spectrum
            .get_or_init(|| Spectrum::from_generator(&self.first_column).expect("non-empty generator"))
    }

    /// `Fᴴ Σ F M`, column by column.
    pub fn apply(&self, m: &Matrix<T>) -> Result<Matrix<T>> {
        let n = self.size();
        if m.rows() != n {
            return Err(Error::dim(format!("{n} rows"), m.rows()));
        }
        if m.cols() == 0 {
            return Ok(m.clone());
        }
        let plan = Fourier::new(n)?;
        let mut buf = m.map(|v| Complex::new(v, T::zero()));
        plan.forward_in_place(buf.as_mut_slice());
        let sigma = self.spectrum().values();
        for col in buf.columns_mut() {
            for (v, &s) in col.iter_mut().zip(sigma) {
                *v *= s;
            }
        }
        plan.inverse_in_place(buf.as_mut_slice());
        Ok(buf.map(|v| v.re))
    }

    /// Dense `circ(c)`: column `j` is `c` cyclically shifted down by `j`.
    pub fn to_dense(&self) -> Matrix<T> {
        dense_circulant(&self.first_column)
    }
}

pub fn circulant_apply<T: Real>(op: &CirculantOperator<T>, m: &Matrix<T>) -> Result<Matrix<T>> {
    op.apply(m)
}

/// Cyclic down-shift by `q` positions (`q` taken modulo the length).
pub fn shift_vector<T: Copy>(x: &[T], q: i64) -> Vec<T> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let q = q.rem_euclid(n as i64) as usize;
    (0..n).map(|i| x[(i + n - q) % n]).collect()
}

/// Circulant of size `p = n + m - 1` whose action on a zero-padded length-`m`
/// input is the linear convolution with `c`.
pub fn embed_conv<T: Real>(c: &[T], m: usize) -> Result<CirculantOperator<T>> {
    if m < 1 || c.is_empty() {
        return Err(Error::Size(format!(
            "convolution needs kernel length >= 1 and input length >= 1 (got {}, {m})",
            c.len()
        )));
    }
    let p = c.len() + m - 1;
    let mut g = vec![T::zero(); p];
    g[..c.len()].copy_from_slice(c);
    CirculantOperator::new(g)
}

pub fn dense_circulant<T: Real>(c: &[T]) -> Matrix<T> {
    let n = c.len();
    Matrix::from_fn(n, n, |i, j| c[(i + n - j) % n])
}

/// `[circ(c₁) … circ(c_L)]`, all generators of the same length.
pub fn union_dictionary<T: Real>(generators: &[Vec<T>]) -> Matrix<T> {
    let n = generators.first().map_or(0, Vec::len);
    let mut cols = Vec::with_capacity(n * generators.len());
    for g in generators {
        for q in 0..n {
            cols.push(shift_vector(g, q as i64));
        }
    }
    Matrix::from_columns(n, &cols).expect("equal generator lengths")
}
