//! Wavelet-like cascades `W = W₁ ⋯ W_m` with learned two-channel filters.
//!
//! Stage `k` (0-based) acts on the leading `p_k = p / 2ᵏ` coordinates as
//! `C_k = [G_k S, H_k S]`: the first half of its input is upsampled by two and
//! filtered with `g_k`, the second half with `h_k`, and the two are summed.
//! Coordinates beyond `p_k` pass through unchanged.

use std::time::Instant;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::learn::{random_unit, rng, Event, FitConfig, FitReport};
use crate::linalg::{cholesky_in_place, cholesky_solve, left_singular_vectors};
use crate::matrix::Matrix;
use crate::scalar::{abs, Real};
use crate::sparse::{omp_batch, project_topk, SparseCode};
use crate::spectral::Fourier;
use crate::uconv::{assemble_gram, assemble_rhs};

/// One stage: filters of common length `n` acting on `size` coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveletStage<T> {
    size: usize,
    g: Vec<T>,
    h: Vec<T>,
}

impl<T: Real> WaveletStage<T> {
    pub fn new(size: usize, g: Vec<T>, h: Vec<T>) -> Result<Self> {
        if size < 2 || !size.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "stage size {size} must be even and at least 2"
            )));
        }
        if g.is_empty() || g.len() != h.len() {
            return Err(Error::dim(g.len(), h.len()));
        }
        if g.len() > size {
            return Err(Error::Config(format!(
                "filter length {} exceeds stage size {size}",
                g.len()
            )));
        }
        Ok(Self { size, g, h })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn g(&self) -> &[T] {
        &self.g
    }

    pub fn h(&self) -> &[T] {
        &self.h
    }

    /// `x[..size] ← C x[..size]`; returns the number of multiplies.
    fn apply_in_place(&self, x: &mut [T], out: &mut [T]) -> usize {
        let q = self.size;
        let half = q / 2;
        let n = self.g.len();
        out[..q].iter_mut().for_each(|v| *v = T::zero());
        for j in 0..half {
            let (a, b) = (x[j], x[half + j]);
            for i in 0..n {
                let r = (2 * j + i) % q;
                out[r] += a * self.g[i] + b * self.h[i];
            }
        }
        x[..q].copy_from_slice(&out[..q]);
        2 * n * half
    }

    /// Dense `C_k`.
    pub fn to_dense(&self) -> Matrix<T> {
        let q = self.size;
        let mut out = vec![T::zero(); q];
        let cols: Vec<Vec<T>> = (0..q)
            .map(|j| {
                let mut e = vec![T::zero(); q];
                e[j] = T::one();
                self.apply_in_place(&mut e, &mut out);
                e
            })
            .collect();
        Matrix::from_columns(q, &cols).expect("square")
    }
}

/// Cascade of `m` stages with the column scaling `D` that makes `WD` unit-norm.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveletDict<T> {
    p: usize,
    stages: Vec<WaveletStage<T>>,
    norm_diag: Vec<T>,
}

impl<T: Real> WaveletDict<T> {
    /// `D` is computed from the stages.
    pub fn new(p: usize, stages: Vec<WaveletStage<T>>) -> Result<Self> {
        check_shape(p, stages.len(), stages.first().map_or(0, |s| s.g.len()))?;
        let n = stages[0].g.len();
        for (k, s) in stages.iter().enumerate() {
            if s.size != p >> k {
                return Err(Error::dim(p >> k, s.size));
            }
            if s.g.len() != n {
                return Err(Error::dim(n, s.g.len()));
            }
        }
        let mut dict = Self {
            p,
            stages,
            norm_diag: vec![T::one(); p],
        };
        dict.renormalize()?;
        Ok(dict)
    }

    /// The same filters at every stage.
    pub fn from_filters(p: usize, m: usize, g: &[T], h: &[T]) -> Result<Self> {
        check_shape(p, m, g.len())?;
        let stages = (0..m)
            .map(|k| WaveletStage::new(p >> k, g.to_vec(), h.to_vec()))
            .collect::<Result<_>>()?;
        Self::new(p, stages)
    }

    /// Every stage is the permutation `g = e₀`, `h = e₁`: the first half of the
    /// input goes to the even coordinates, the second half to the odd ones.
    pub fn identity(p: usize, m: usize, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config(
                "the identity stage needs filters of length at least 2".into(),
            ));
        }
        let mut g = vec![T::zero(); n];
        let mut h = vec![T::zero(); n];
        g[0] = T::one();
        h[1] = T::one();
        Self::from_filters(p, m, &g, &h)
    }

    /// Haar cascade down to stages of size 2.
    pub fn haar(p: usize) -> Result<Self> {
        let (g, h) = haar_filters();
        Self::from_filters(p, log2_exact(p)?, &g, &h)
    }

    /// Daubechies D4 cascade down to stages of size 4.
    pub fn d4(p: usize) -> Result<Self> {
        let (g, h) = d4_filters();
        let m = log2_exact(p)?;
        if m < 2 {
            return Err(Error::Config(format!("D4 needs p ≥ 4, got {p}")));
        }
        Self::from_filters(p, m - 1, &g, &h)
    }

    /// Seeded random unit filters at every stage.
    pub fn random(p: usize, m: usize, n: usize, seed: u64) -> Result<Self> {
        check_shape(p, m, n)?;
        let mut r = rng(seed);
        let stages = (0..m)
            .map(|k| WaveletStage::new(p >> k, random_unit(&mut r, n), random_unit(&mut r, n)))
            .collect::<Result<_>>()?;
        Self::new(p, stages)
    }

    pub fn size(&self) -> usize {
        self.p
    }

    pub fn depth(&self) -> usize {
        self.stages.len()
    }

    pub fn filter_len(&self) -> usize {
        self.stages[0].g.len()
    }

    pub fn stages(&self) -> &[WaveletStage<T>] {
        &self.stages
    }

    pub fn stage(&self, k: usize) -> &WaveletStage<T> {
        &self.stages[k]
    }

    pub fn norm_diag(&self) -> &[T] {
        &self.norm_diag
    }

    /// Learnable parameters, `2nm`.
    pub fn parameter_count(&self) -> usize {
        2 * self.filter_len() * self.depth()
    }

    /// All filters, stage by stage, `g` before `h`.
    pub fn parameters(&self) -> Vec<T> {
        self.stages
            .iter()
            .flat_map(|s| s.g.iter().chain(&s.h).copied())
            .collect()
    }

    pub(crate) fn set_filters(&mut self, k: usize, g: Vec<T>, h: Vec<T>) {
        self.stages[k].g = g;
        self.stages[k].h = h;
    }

    /// Recomputes `D` from the column norms of `W`.
    pub fn renormalize(&mut self) -> Result<()> {
        let norms = self.to_dense().col_norms();
        if let Some(j) = norms.iter().position(|&v| v == T::zero()) {
            return Err(Error::Contract(format!("cascade column {j} is zero")));
        }
        self.norm_diag = norms.into_iter().map(|v| T::one() / v).collect();
        Ok(())
    }

    /// Dense `W`.
    pub fn to_dense(&self) -> Matrix<T> {
        let mut w = Matrix::identity(self.p);
        apply_stages(&self.stages, &mut w);
        w
    }

    /// Dense `WD`, unit-norm columns.
    pub fn dictionary(&self) -> Matrix<T> {
        let mut w = self.to_dense();
        for (j, &d) in self.norm_diag.iter().enumerate() {
            w.col_mut(j).iter_mut().for_each(|v| *v *= d);
        }
        w
    }

    /// `W D X`.
    pub fn synthesize(&self, code: &SparseCode<T>) -> Result<Matrix<T>> {
        let mut x = code.to_dense();
        fold_norms(&mut x, &self.norm_diag);
        wavelet_apply(self, &x)
    }
}

fn log2_exact(p: usize) -> Result<usize> {
    if p < 2 || !p.is_power_of_two() {
        return Err(Error::Config(format!("p = {p} must be a power of two")));
    }
    Ok(p.trailing_zeros() as usize)
}

fn check_shape(p: usize, m: usize, n: usize) -> Result<()> {
    if m < 1 {
        return Err(Error::Config("the cascade needs at least one stage".into()));
    }
    if m >= usize::BITS as usize || !p.is_multiple_of(1 << m) {
        return Err(Error::Config(format!("2^m = 2^{m} must divide p = {p}")));
    }
    let last = p >> (m - 1);
    if n < 1 || n > last {
        return Err(Error::Config(format!(
            "filter length n = {n} must lie in 1..={last} (p / 2^(m-1))"
        )));
    }
    Ok(())
}

fn fold_norms<T: Real>(x: &mut Matrix<T>, d: &[T]) {
    for col in x.columns_mut() {
        for (v, &s) in col.iter_mut().zip(d) {
            *v *= s;
        }
    }
}

/// `W_first ⋯ W_last` applied to every column, innermost stage first.
fn apply_stages<T: Real>(stages: &[WaveletStage<T>], x: &mut Matrix<T>) -> usize {
    let mut out = vec![T::zero(); x.rows()];
    let mut count = 0;
    for col in x.columns_mut() {
        for s in stages.iter().rev() {
            count += s.apply_in_place(col, &mut out);
        }
    }
    count
}

/// `W X`, without the column scaling.
pub fn wavelet_apply<T: Real>(dict: &WaveletDict<T>, x: &Matrix<T>) -> Result<Matrix<T>> {
    wavelet_apply_counted(dict, x).map(|(y, _)| y)
}

/// [`wavelet_apply`] with the number of scalar multiplies, `Σ_k n·p_k` per column.
pub fn wavelet_apply_counted<T: Real>(dict: &WaveletDict<T>, x: &Matrix<T>) -> Result<(Matrix<T>, usize)> {
    if x.rows() != dict.p {
        return Err(Error::dim(dict.p, x.rows()));
    }
    let mut y = x.clone();
    let count = apply_stages(&dict.stages, &mut y);
    Ok((y, count))
}

/// `[1, 1] / √2` and `[1, −1] / √2`.
pub fn haar_filters<T: Real>() -> (Vec<T>, Vec<T>) {
    let r = T::FRAC_1_SQRT_2();
    (vec![r, r], vec![r, -r])
}

/// Daubechies D4 low- and high-pass filters.
pub fn d4_filters<T: Real>() -> (Vec<T>, Vec<T>) {
    let s3 = T::lit(3.0).sqrt();
    let one = T::one();
    let three = T::lit(3.0);
    let den = T::lit(4.0) * T::SQRT_2();
    let g = vec![one + s3, three + s3, three - s3, one - s3];
    let h = vec![one - s3, -(three - s3), three + s3, -(one + s3)];
    (
        g.into_iter().map(|v| v / den).collect(),
        h.into_iter().map(|v| v / den).collect(),
    )
}

/// New filters of one stage.
#[derive(Clone, Debug, PartialEq)]
pub struct StageUpdate<T> {
    pub g: Vec<T>,
    pub h: Vec<T>,
    pub ridge: Option<T>,
    /// The leading columns of the outer cascade were orthonormal and the
    /// Toeplitz route was taken.
    pub orthonormal: bool,
}

/// Least-squares filters of stage `k` (0-based) for `Y ≈ W X`, all other
/// stages fixed. `X` holds the coefficients with `D` already applied.
pub fn stage_ls_update<T: Real>(
    dict: &WaveletDict<T>,
    k: usize,
    y: &Matrix<T>,
    x: &Matrix<T>,
) -> Result<StageUpdate<T>> {
    let p = dict.p;
    if k >= dict.depth() {
        return Err(Error::Config(format!(
            "stage {k} out of range 0..{}",
            dict.depth()
        )));
    }
    if y.rows() != p || x.rows() != p {
        return Err(Error::dim(p, if y.rows() != p { y.rows() } else { x.rows() }));
    }
    if y.cols() != x.cols() {
        return Err(Error::dim(y.cols(), x.cols()));
    }
    let q = p >> k;
    let n = dict.filter_len();
    let cols = y.cols();

    // X̄ = W_B X and Ȳ = Y − W_A [0; X̄₂]
    let mut xb = x.clone();
    apply_stages(&dict.stages[k + 1..], &mut xb);
    let mut tail = xb.clone();
    for col in tail.columns_mut() {
        col[..q].iter_mut().for_each(|v| *v = T::zero());
    }
    apply_stages(&dict.stages[..k], &mut tail);
    let ybar = y.sub(&tail)?;

    // leading q columns of W_A
    let mut wa = Matrix::from_fn(p, q, |i, j| if i == j { T::one() } else { T::zero() });
    apply_stages(&dict.stages[..k], &mut wa);
    let yhat = wa.tr_matmul(&ybar)?;
    let gram_a = wa.tr_matmul(&wa)?;
    let identity_gap = (0..q)
        .flat_map(|i| (0..q).map(move |j| (i, j)))
        .map(|(i, j)| abs(gram_a[(i, j)] - if i == j { T::one() } else { T::zero() }))
        .fold(T::zero(), T::max);
    let orthonormal = identity_gap < T::lit(1e-10);

    let (gram, rhs) = if orthonormal {
        orthonormal_system(&xb, &yhat, q, n)?
    } else {
        general_system(&xb, &yhat, &gram_a, q, n, cols)
    };
    let (c, ridge) = solve_dense(gram, &rhs)?;
    Ok(StageUpdate {
        g: c[..n].to_vec(),
        h: c[n..].to_vec(),
        ridge,
        orthonormal,
    })
}

/// Upsampled halves of `X̄₁` as two `q × N` matrices.
fn upsampled_halves<T: Real>(xb: &Matrix<T>, q: usize) -> [Matrix<T>; 2] {
    let half = q / 2;
    let mk = |offset: usize| {
        Matrix::from_fn(q, xb.cols(), |r, j| {
            if r % 2 == 0 {
                xb[(offset + r / 2, j)]
            } else {
                T::zero()
            }
        })
    };
    [mk(0), mk(half)]
}

/// With `W_{A,1}ᵀ W_{A,1} = I` the stage is a union of two convolutions of
/// the upsampled halves fitted to `W_{A,1}ᵀ Ȳ`.
fn orthonormal_system<T: Real>(
    xb: &Matrix<T>,
    yhat: &Matrix<T>,
    q: usize,
    n: usize,
) -> Result<(Matrix<T>, Vec<T>)> {
    let plan = Fourier::new(q)?;
    let [u0, u1] = upsampled_halves(xb, q);
    let xts: Vec<Matrix<Complex<T>>> = vec![plan.columns(&u0)?, plan.columns(&u1)?];
    let refs: Vec<&Matrix<Complex<T>>> = xts.iter().collect();
    let yt = plan.columns(yhat)?;
    let gram = assemble_gram(&refs, n)?.to_dense();
    let rhs = assemble_rhs(&yt, &refs, n)?;
    Ok((gram, rhs))
}

/// Exact normal equations for a general outer cascade:
/// `G[(a,i),(b,j)] = Σ_{s,t} M[2s+i][2t+j] (X_a X_bᵀ)[s][t]` with
/// `M = W_{A,1}ᵀ W_{A,1}` and indices mod `q`.
fn general_system<T: Real>(
    xb: &Matrix<T>,
    yhat: &Matrix<T>,
    m: &Matrix<T>,
    q: usize,
    n: usize,
    cols: usize,
) -> (Matrix<T>, Vec<T>) {
    let half = q / 2;
    let rows = |a: usize, s: usize, j: usize| xb[(a * half + s, j)];
    // K_ab = X_a X_bᵀ for (0,0), (0,1), (1,1)
    let cross = |a: usize, b: usize| {
        let mut kk = Matrix::<T>::zeros(half, half);
        for j in 0..cols {
            for t in 0..half {
                let xt = rows(b, t, j);
                if xt == T::zero() {
                    continue;
                }
                for s in 0..half {
                    kk[(s, t)] += rows(a, s, j) * xt;
                }
            }
        }
        kk
    };
    let k00 = cross(0, 0);
    let k01 = cross(0, 1);
    let k11 = cross(1, 1);
    let kab = |a: usize, b: usize, s: usize, t: usize| match (a, b) {
        (0, 0) => k00[(s, t)],
        (0, 1) => k01[(s, t)],
        (1, 0) => k01[(t, s)],
        _ => k11[(s, t)],
    };
    let dim = 2 * n;
    let mut gram = Matrix::<T>::zeros(dim, dim);
    for r in 0..dim {
        let (a, i) = (r / n, r % n);
        for c in r..dim {
            let (b, j) = (c / n, c % n);
            let mut acc = T::zero();
            for s in 0..half {
                let mr = (2 * s + i) % q;
                for t in 0..half {
                    acc += m[(mr, (2 * t + j) % q)] * kab(a, b, s, t);
                }
            }
            gram[(r, c)] = acc;
            gram[(c, r)] = acc;
        }
    }
    // v[(a,i)] = Σ_s Σ_cols X_a[s] ŷ[2s+i]
    let mut rhs = vec![T::zero(); dim];
    for j in 0..cols {
        let yc = yhat.col(j);
        for a in 0..2 {
            for s in 0..half {
                let xv = rows(a, s, j);
                if xv == T::zero() {
                    continue;
                }
                for i in 0..n {
                    rhs[a * n + i] += xv * yc[(2 * s + i) % q];
                }
            }
        }
    }
    (gram, rhs)
}

fn solve_dense<T: Real>(gram: Matrix<T>, rhs: &[T]) -> Result<(Vec<T>, Option<T>)> {
    let mut factor = gram.clone();
    if cholesky_in_place(&mut factor).is_ok() {
        return Ok((cholesky_solve(&factor, rhs), None));
    }
    let dim = gram.rows();
    let trace: T = (0..dim).map(|i| gram[(i, i)]).sum();
    let mut ridge = T::lit(1e-10) * trace / T::from_usize_lossy(dim);
    if !(ridge > T::zero()) {
        ridge = T::min_positive_value().sqrt();
    }
    factor = gram;
    for i in 0..dim {
        factor[(i, i)] += ridge;
    }
    cholesky_in_place(&mut factor)?;
    Ok((cholesky_solve(&factor, rhs), Some(ridge)))
}

/// Starting point of [`wdla_fit`].
#[derive(Clone, Debug, PartialEq)]
pub enum WaveletInit<T> {
    /// Identity-like stages and codes from the leading singular vectors of `Y`.
    Svd,
    Haar,
    D4,
    /// Seeded random unit filters.
    Random,
    Given(WaveletDict<T>),
}

#[derive(Clone, Debug)]
pub struct WaveletFit<T: Real> {
    pub dict: WaveletDict<T>,
    pub code: SparseCode<T>,
    pub report: FitReport,
}

/// Checks the cascade parameters for an initialization.
pub fn validate_wavelet<T: Real>(p: usize, m: usize, n: usize, init: &WaveletInit<T>) -> Result<()> {
    check_shape(p, m, n)?;
    match init {
        WaveletInit::Haar => {
            if n != 2 || !p.is_power_of_two() || m != log2_exact(p)? {
                return Err(Error::Config(format!(
                    "Haar initialization needs n = 2 and m = log2(p); got n = {n}, m = {m}, p = {p}"
                )));
            }
        }
        WaveletInit::D4 => {
            if n != 4 || !p.is_power_of_two() || m + 1 != log2_exact(p)? {
                return Err(Error::Config(format!(
                    "D4 initialization needs n = 4 and m = log2(p) - 1; got n = {n}, m = {m}, p = {p}"
                )));
            }
        }
        WaveletInit::Svd if n < 2 => {
            return Err(Error::Config("SVD initialization needs n ≥ 2".into()));
        }
        WaveletInit::Given(d) if (d.size() != p || d.depth() != m || d.filter_len() != n) => {
            return Err(Error::Config(format!(
                "given cascade has p = {}, m = {}, n = {}; expected {p}, {m}, {n}",
                d.size(),
                d.depth(),
                d.filter_len()
            )));
        }
        _ => {}
    }
    Ok(())
}

/// `‖Y − W X‖²_F` for coefficients with `D` applied.
fn residual<T: Real>(dict: &WaveletDict<T>, y: &Matrix<T>, x: &Matrix<T>) -> Result<T> {
    Ok(y.sub(&wavelet_apply(dict, x)?)?.frobenius_sq())
}

/// Learns an `m`-stage cascade with filters of length `n`.
pub fn wdla_fit<T: Real>(
    y: &Matrix<T>,
    m: usize,
    n: usize,
    init: WaveletInit<T>,
    config: &FitConfig,
) -> Result<WaveletFit<T>> {
    let p = y.rows();
    if p == 0 || y.cols() == 0 {
        return Err(Error::Size("empty training data".into()));
    }
    validate_wavelet(p, m, n, &init)?;
    config.validate(p)?;
    let energy = y.frobenius_sq();
    if energy == T::zero() {
        return Err(Error::ZeroDataset);
    }
    let s = config.sparsity;
    let mut report = FitReport::new(energy.as_f64());

    let t = Instant::now();
    let (mut dict, mut code) = match init {
        WaveletInit::Svd => {
            let dict = WaveletDict::identity(p, m, n)?;
            let (_, u) = left_singular_vectors(y);
            let code = project_topk(&u.tr_matmul(y)?, s);
            (dict, code)
        }
        other => {
            let dict = match other {
                WaveletInit::Haar => WaveletDict::haar(p)?,
                WaveletInit::D4 => WaveletDict::d4(p)?,
                WaveletInit::Random => WaveletDict::random(p, m, n, config.seed)?,
                WaveletInit::Given(d) => d,
                WaveletInit::Svd => unreachable!(),
            };
            let code = omp_batch(&dict.dictionary(), y, s, None)?;
            (dict, code)
        }
    };
    report.timings.add_coding(t.elapsed());
    let mut x = code.to_dense();
    fold_norms(&mut x, dict.norm_diag());
    let mut current = residual(&dict, y, &x)?;

    for it in 1..=config.iterations {
        let before = current;
        let t = Instant::now();
        for k in 0..m {
            let up = stage_ls_update(&dict, k, y, &x)?;
            if let Some(r) = up.ridge {
                report.events.push(Event::Ridge {
                    iteration: it,
                    stage: Some(k),
                    ridge: r.as_f64(),
                });
            }
            let zero = |v: &[T]| v.iter().all(|&a| a == T::zero());
            if zero(&up.g) || zero(&up.h) {
                report.events.push(Event::ZeroKernel {
                    iteration: it,
                    block: k,
                });
                continue;
            }
            dict.set_filters(k, up.g, up.h);
        }
        let after = residual(&dict, y, &x)?;
        dict.renormalize()?;
        report.timings.add_dictionary(t.elapsed());

        let t = Instant::now();
        code = omp_batch(&dict.dictionary(), y, s, None)?;
        x = code.to_dense();
        fold_norms(&mut x, dict.norm_diag());
        report.timings.add_coding(t.elapsed());
        current = residual(&dict, y, &x)?;
        report.push(it, before.as_f64(), after.as_f64(), current.as_f64());
        if report.should_stop(config.early_stop) {
            break;
        }
    }
    Ok(WaveletFit { dict, code, report })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_cascade_is_a_permutation() {
        let d = WaveletDict::<f64>::identity(16, 2, 2).unwrap();
        let w = d.to_dense();
        for j in 0..16 {
            let col = w.col(j);
            assert_eq!(col.iter().filter(|&&v| v == 1.0).count(), 1);
            assert_eq!(col.iter().filter(|&&v| v == 0.0).count(), 15);
        }
    }

    #[test]
    fn haar_is_orthonormal() {
        let w = WaveletDict::<f64>::haar(16).unwrap().to_dense();
        let g = w.tr_matmul(&w).unwrap();
        assert!(g.max_abs_diff(&Matrix::identity(16)) < 1e-12);
    }

    #[test]
    fn apply_counts_multiplies() {
        let d = WaveletDict::<f64>::random(32, 3, 4, 1).unwrap();
        let x = Matrix::<f64>::identity(32);
        let (_, count) = wavelet_apply_counted(&d, &x).unwrap();
        assert_eq!(count, 32 * 4 * (32 + 16 + 8));
    }

    #[test]
    fn shape_checks() {
        assert!(WaveletDict::<f64>::random(24, 4, 2, 0).is_err());
        assert!(WaveletDict::<f64>::random(32, 3, 9, 0).is_err());
        assert!(validate_wavelet::<f64>(64, 6, 4, &WaveletInit::Haar).is_err());
        assert!(validate_wavelet::<f64>(64, 5, 4, &WaveletInit::D4).is_ok());
    }
}
