//! Unions of compactly supported convolutions learned by one structured
//! least-squares solve per iteration.
//!
//! A kernel of length `n` acts through the `p × p` circulant whose generator
//! is the kernel followed by zeros. The normal equations for all `L` kernels
//! have `n × n` Toeplitz blocks whose entries are read off the inverse
//! transform of the per-bin cross weights `w_k = (x̃_k⁽ℓ₁⁾)ᴴ x̃_k⁽ℓ₂⁾`.

use std::time::Instant;

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::learn::{center_columns, random_unit, rng, Event, FitConfig, FitReport};
use crate::linalg::{cholesky_in_place, cholesky_solve};
use crate::matrix::{normalize, Matrix};
use crate::scalar::Real;
use crate::solvers::{solve_gram, BlockToeplitzGram, SolverKind, SymToeplitz, ToeplitzBlock};
use crate::sparse::{omp_batch, SparseCode};
use crate::spectral::{union_dictionary, Fourier, Spectrum};
use crate::ucirc::{fourier_objective, transform_blocks};

type C<T> = Complex<T>;

const STAT_CHUNK: usize = 256;
const RESCUE_STREAM: u64 = 0xc0_4e5c;

fn czero<T: Real>() -> C<T> {
    Complex::new(T::zero(), T::zero())
}

/// `[C⁽¹⁾ … C⁽ᴸ⁾]` where `C⁽ℓ⁾` is the `p × p` circulant of kernel `ℓ`
/// placed on the support indices.
#[derive(Clone, Debug, PartialEq)]
pub struct UnionConvDict<T> {
    p: usize,
    support: Vec<usize>,
    kernels: Vec<Vec<T>>,
}

impl<T: Real> UnionConvDict<T> {
    /// Kernels on the leading `n` entries of a length-`p` generator.
    pub fn new(kernels: Vec<Vec<T>>, p: usize) -> Result<Self> {
        let n = kernels.first().map_or(0, Vec::len);
        Self::with_support(kernels, (0..n).collect(), p)
    }

    /// Kernels on an arbitrary set of generator indices.
    pub fn with_support(kernels: Vec<Vec<T>>, support: Vec<usize>, p: usize) -> Result<Self> {
        if kernels.is_empty() {
            return Err(Error::Config("a union needs at least one kernel".into()));
        }
        validate_support(&support, p)?;
        if let Some(k) = kernels.iter().find(|k| k.len() != support.len()) {
            return Err(Error::dim(support.len(), k.len()));
        }
        Ok(Self { p, support, kernels })
    }

    pub fn blocks(&self) -> usize {
        self.kernels.len()
    }

    /// Embedding size `p`.
    pub fn size(&self) -> usize {
        self.p
    }

    /// Kernel length `n`.
    pub fn support_len(&self) -> usize {
        self.support.len()
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn is_prefix(&self) -> bool {
        self.support.iter().enumerate().all(|(i, &s)| i == s)
    }

    pub fn kernel(&self, l: usize) -> &[T] {
        &self.kernels[l]
    }

    pub fn kernels(&self) -> &[Vec<T>] {
        &self.kernels
    }

    /// Length-`p` generator of block `l`, zero off the support.
    pub fn generator(&self, l: usize) -> Vec<T> {
        let mut g = vec![T::zero(); self.p];
        for (&i, &v) in self.support.iter().zip(&self.kernels[l]) {
            g[i] = v;
        }
        g
    }

    pub fn generators(&self) -> Vec<Vec<T>> {
        (0..self.blocks()).map(|l| self.generator(l)).collect()
    }

    pub(crate) fn set_kernel(&mut self, l: usize, k: Vec<T>) {
        self.kernels[l] = k;
    }

    pub fn spectra(&self) -> Result<Vec<Spectrum<T>>> {
        (0..self.blocks())
            .map(|l| Spectrum::from_generator(&self.generator(l)))
            .collect()
    }

    /// Dense `p × pL` matrix; column `ℓp + j` is generator `ℓ` shifted by `j`.
    pub fn to_dense(&self) -> Matrix<T> {
        union_dictionary(&self.generators())
    }

    pub fn synthesize(&self, code: &SparseCode<T>) -> Result<Matrix<T>> {
        code.synthesize(&self.to_dense())
    }

    /// Degrees of freedom, `nL`.
    pub fn parameter_count(&self) -> usize {
        self.support.len() * self.blocks()
    }
}

fn validate_support(support: &[usize], p: usize) -> Result<()> {
    if support.is_empty() {
        return Err(Error::Config("kernel support must not be empty".into()));
    }
    if support.len() > p {
        return Err(Error::Config(format!(
            "kernel length n = {} exceeds the embedding size p = {p}",
            support.len()
        )));
    }
    if support.windows(2).any(|w| w[0] >= w[1]) || support[support.len() - 1] >= p {
        return Err(Error::Config(format!(
            "support indices must be strictly increasing and below p = {p}"
        )));
    }
    Ok(())
}

/// Normal equations `G c = v` of the joint kernel update.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvGramSystem<T> {
    pub gram: BlockToeplitzGram<T>,
    pub rhs: Vec<T>,
}

fn check_blocks<T: Real>(rows: usize, cols: usize, xts: &[&Matrix<C<T>>]) -> Result<()> {
    if xts.is_empty() {
        return Err(Error::Config("no blocks".into()));
    }
    if let Some(x) = xts.iter().find(|x| x.shape() != (rows, cols)) {
        return Err(Error::dim(
            format!("{:?}", (rows, cols)),
            format!("{:?}", x.shape()),
        ));
    }
    Ok(())
}

/// Upper-triangle cross weights per bin `0..=p/2`, laid out
/// `bins × L × L`, and the number of complex products formed.
fn cross_weights<T: Real>(xts: &[&Matrix<C<T>>]) -> (Vec<C<T>>, usize) {
    let l = xts.len();
    let (p, cols) = xts[0].shape();
    let bins = p / 2 + 1;
    let starts: Vec<usize> = (0..cols).step_by(STAT_CHUNK).collect();
    let partial: Vec<(Vec<C<T>>, usize)> = starts
        .par_iter()
        .map(|&start| {
            let mut w = vec![czero(); bins * l * l];
            let mut count = 0;
            for j in start..(start + STAT_CHUNK).min(cols) {
                for k in 0..bins {
                    let wk = &mut w[k * l * l..(k + 1) * l * l];
                    for a in 0..l {
                        let xa = xts[a][(k, j)].conj();
                        for b in a..l {
                            wk[a * l + b] += xa * xts[b][(k, j)];
                            count += 1;
                        }
                    }
                }
            }
            (w, count)
        })
        .collect();
    let mut w = vec![czero(); bins * l * l];
    let mut count = 0;
    for (pw, c) in partial {
        for (a, b) in w.iter_mut().zip(pw) {
            *a += b;
        }
        count += c;
    }
    (w, count)
}

/// `z_k⁽ℓ⁾ = (x̃_k⁽ℓ⁾)ᴴ ỹ_k` for bins `0..=p/2`, laid out `bins × L`.
fn rhs_weights<T: Real>(yt: &Matrix<C<T>>, xts: &[&Matrix<C<T>>]) -> Vec<C<T>> {
    let l = xts.len();
    let bins = yt.rows() / 2 + 1;
    let starts: Vec<usize> = (0..yt.cols()).step_by(STAT_CHUNK).collect();
    let partial: Vec<Vec<C<T>>> = starts
        .par_iter()
        .map(|&start| {
            let mut z = vec![czero(); bins * l];
            for j in start..(start + STAT_CHUNK).min(yt.cols()) {
                let y = yt.col(j);
                for k in 0..bins {
                    for (a, x) in xts.iter().enumerate() {
                        z[k * l + a] += x[(k, j)].conj() * y[k];
                    }
                }
            }
            z
        })
        .collect();
    let mut z = vec![czero(); bins * l];
    for pz in partial {
        for (a, b) in z.iter_mut().zip(pz) {
            *a += b;
        }
    }
    z
}

/// `Σ_k e^{2πikd/p} w_k` for `d = 0..p`, from the half spectrum `k ≤ p/2`
/// (the rest is its conjugate mirror).
fn cyclic_sequence<T: Real>(plan: &Fourier<T>, half: impl Fn(usize) -> C<T>) -> Vec<T> {
    let p = plan.len();
    let mut full = vec![czero(); p];
    for k in 0..=p / 2 {
        let v = half(k);
        if k == 0 || 2 * k == p {
            full[k] = Complex::new(v.re, T::zero());
        } else {
            full[k] = v;
            full[p - k] = v.conj();
        }
    }
    let scale = T::from_usize_lossy(p).sqrt();
    let (t, _) = plan.inverse_real(&full);
    t.into_iter().map(|v| v * scale).collect()
}

/// Cyclic sequences `t⁽ℓ₁ℓ₂⁾` for `ℓ₁ ≤ ℓ₂`, in row-major upper order.
fn gram_sequences<T: Real>(xts: &[&Matrix<C<T>>]) -> Result<(Vec<Vec<T>>, usize)> {
    let l = xts.len();
    let plan = Fourier::new(xts[0].rows())?;
    let (w, count) = cross_weights(xts);
    let pairs: Vec<(usize, usize)> = (0..l).flat_map(|a| (a..l).map(move |b| (a, b))).collect();
    let seqs = pairs
        .par_iter()
        .map(|&(a, b)| cyclic_sequence(&plan, |k| w[k * l * l + a * l + b]))
        .collect();
    Ok((seqs, count))
}

fn pair_index(l: usize, a: usize, b: usize) -> usize {
    // offset of row a in the packed upper triangle
    a * l - a * (a + 1) / 2 + b
}

fn toeplitz_gram<T: Real>(seqs: &[Vec<T>], l: usize, n: usize) -> Result<BlockToeplitzGram<T>> {
    let mut diagonal = Vec::with_capacity(l);
    let mut upper = Vec::with_capacity(l * (l - 1) / 2);
    for a in 0..l {
        diagonal.push(SymToeplitz::new(seqs[pair_index(l, a, a)][..n].to_vec())?);
        for b in a + 1..l {
            upper.push(ToeplitzBlock::from_cyclic_sequence(&seqs[pair_index(l, a, b)], n));
        }
    }
    BlockToeplitzGram::new(diagonal, upper)
}

/// Gram over an arbitrary support: entry `((a,i),(b,j))` is `t⁽ᵃᵇ⁾[(Sᵢ − Sⱼ) mod p]`.
fn dense_gram<T: Real>(seqs: &[Vec<T>], l: usize, support: &[usize], p: usize) -> Matrix<T> {
    let n = support.len();
    Matrix::from_fn(n * l, n * l, |r, c| {
        let (a, i) = (r / n, r % n);
        let (b, j) = (c / n, c % n);
        if a <= b {
            seqs[pair_index(l, a, b)][(support[i] + p - support[j]) % p]
        } else {
            seqs[pair_index(l, b, a)][(support[j] + p - support[i]) % p]
        }
    })
}

/// `v⁽ℓ⁾`: the support entries of the inverse transform of `z⁽ℓ⁾`, stacked.
fn rhs_on_support<T: Real>(yt: &Matrix<C<T>>, xts: &[&Matrix<C<T>>], support: &[usize]) -> Result<Vec<T>> {
    let l = xts.len();
    let plan = Fourier::new(yt.rows())?;
    let z = rhs_weights(yt, xts);
    let mut v = Vec::with_capacity(l * support.len());
    for a in 0..l {
        let t = cyclic_sequence(&plan, |k| z[k * l + a]);
        v.extend(support.iter().map(|&i| t[i]));
    }
    Ok(v)
}

/// Right-hand side `v = [v⁽¹⁾ … v⁽ᴸ⁾]` for kernels on the leading `n` entries.
pub fn assemble_rhs<T: Real>(yt: &Matrix<C<T>>, xts: &[&Matrix<C<T>>], n: usize) -> Result<Vec<T>> {
    check_blocks(yt.rows(), yt.cols(), xts)?;
    validate_support(&(0..n).collect::<Vec<_>>(), yt.rows())?;
    rhs_on_support(yt, xts, &(0..n).collect::<Vec<_>>())
}

/// Block-Toeplitz Gram `Bᴴ B` for kernels on the leading `n` entries.
pub fn assemble_gram<T: Real>(xts: &[&Matrix<C<T>>], n: usize) -> Result<BlockToeplitzGram<T>> {
    assemble_gram_counted(xts, n).map(|(g, _)| g)
}

/// [`assemble_gram`] together with the number of complex products spent on
/// the cross weights, `(⌊p/2⌋ + 1)·L(L+1)/2·N`.
pub fn assemble_gram_counted<T: Real>(
    xts: &[&Matrix<C<T>>],
    n: usize,
) -> Result<(BlockToeplitzGram<T>, usize)> {
    let Some(first) = xts.first() else {
        return Err(Error::Config("no blocks".into()));
    };
    check_blocks(first.rows(), first.cols(), xts)?;
    validate_support(&(0..n).collect::<Vec<_>>(), first.rows())?;
    let (seqs, count) = gram_sequences(xts)?;
    Ok((toeplitz_gram(&seqs, xts.len(), n)?, count))
}

pub fn assemble_system<T: Real>(
    yt: &Matrix<C<T>>,
    xts: &[&Matrix<C<T>>],
    n: usize,
) -> Result<ConvGramSystem<T>> {
    Ok(ConvGramSystem {
        gram: assemble_gram(xts, n)?,
        rhs: assemble_rhs(yt, xts, n)?,
    })
}

/// Outcome of [`single_conv_update`].
#[derive(Clone, Debug, PartialEq)]
pub struct ConvUpdate<T> {
    pub kernel: Vec<T>,
    pub ridge: Option<T>,
    /// The code was all zero and the kernel is a seeded random unit vector.
    pub random: bool,
}

/// Least-squares kernel of length `n` for one convolution at fixed code,
/// solved with Levinson–Durbin on the Toeplitz system `T c = v` with weights
/// `‖x̃_k‖²`.
pub fn single_conv_update<T: Real>(
    yt: &Matrix<C<T>>,
    xt: &Matrix<C<T>>,
    n: usize,
    seed: u64,
) -> Result<ConvUpdate<T>> {
    check_blocks(yt.rows(), yt.cols(), &[xt])?;
    let p = yt.rows();
    validate_support(&(0..n).collect::<Vec<_>>(), p)?;
    let empty = xt.as_slice().iter().all(|v| v.norm_sqr() == T::zero());
    if empty {
        return Ok(ConvUpdate {
            kernel: random_unit(&mut rng(seed), n),
            ridge: None,
            random: true,
        });
    }
    let system = assemble_system(yt, &[xt], n)?;
    let sol = solve_gram(&system.gram, &system.rhs, &Default::default())?;
    Ok(ConvUpdate {
        kernel: sol.solution,
        ridge: sol.ridge,
        random: false,
    })
}

/// Learned convolutional union, its code over all `p` shifts of every kernel,
/// and the iteration report.
#[derive(Clone, Debug)]
pub struct ConvFit<T: Real> {
    pub dict: UnionConvDict<T>,
    pub code: SparseCode<T>,
    pub report: FitReport,
}

/// Seeded random unit kernels on the leading `n` entries.
pub fn random_kernels<T: Real>(blocks: usize, n: usize, seed: u64) -> Vec<Vec<T>> {
    let mut g = rng(seed);
    (0..blocks).map(|_| random_unit(&mut g, n)).collect()
}

/// Union of `L` convolutions with kernels of length `n` acting on signals of
/// length `p` (the rows of `Y`).
pub fn uconv_fit<T: Real>(y: &Matrix<T>, blocks: usize, n: usize, config: &FitConfig) -> Result<ConvFit<T>> {
    if blocks < 1 {
        return Err(Error::Config(
            "number of convolutions L must be at least 1".into(),
        ));
    }
    if n < 1 || n > y.rows() {
        return Err(Error::Config(format!(
            "kernel length n = {n} must lie in 1..={}",
            y.rows()
        )));
    }
    let dict = UnionConvDict::new(random_kernels(blocks, n, config.seed), y.rows())?;
    conv_family_fit(y, dict, config)
}

pub fn uconv_fit_with_init<T: Real>(
    y: &Matrix<T>,
    init: UnionConvDict<T>,
    config: &FitConfig,
) -> Result<ConvFit<T>> {
    conv_family_fit(y, init, config)
}

fn solve_kernels<T: Real>(
    dict: &UnionConvDict<T>,
    yt: &Matrix<C<T>>,
    refs: &[&Matrix<C<T>>],
    config: &FitConfig,
    it: usize,
    report: &mut FitReport,
) -> Result<Vec<T>> {
    let l = refs.len();
    let (seqs, _) = gram_sequences(refs)?;
    let rhs = rhs_on_support(yt, refs, dict.support())?;
    if dict.is_prefix() {
        let gram = toeplitz_gram(&seqs, l, dict.support_len())?;
        let sol = solve_gram(&gram, &rhs, &config.solver)?;
        if let Some(r) = sol.ridge {
            report.events.push(Event::Ridge {
                iteration: it,
                stage: None,
                ridge: r.as_f64(),
            });
        }
        if sol.solver == SolverKind::ConjugateGradient && !sol.converged {
            report.events.push(Event::CgNotConverged { iteration: it });
        }
        return Ok(sol.solution);
    }
    let gram = dense_gram(&seqs, l, dict.support(), dict.size());
    let mut factor = gram.clone();
    if cholesky_in_place(&mut factor).is_err() {
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
        report.events.push(Event::Ridge {
            iteration: it,
            stage: None,
            ridge: ridge.as_f64(),
        });
    }
    Ok(cholesky_solve(&factor, &rhs))
}

fn conv_objective<T: Real>(yt: &Matrix<C<T>>, dict: &UnionConvDict<T>, xts: &[Matrix<C<T>>]) -> Result<T> {
    let spectra = dict.spectra()?;
    let refs: Vec<&[C<T>]> = spectra.iter().map(Spectrum::values).collect();
    Ok(fourier_objective(yt, &refs, xts))
}

fn conv_family_fit<T: Real>(
    y: &Matrix<T>,
    mut dict: UnionConvDict<T>,
    config: &FitConfig,
) -> Result<ConvFit<T>> {
    let p = y.rows();
    let blocks = dict.blocks();
    if p == 0 || y.cols() == 0 {
        return Err(Error::Size("empty training data".into()));
    }
    if dict.size() != p {
        return Err(Error::dim(p, dict.size()));
    }
    config.validate(p)?;
    if let Some(m) = &config.mask {
        if m.len() != p * blocks {
            return Err(Error::Config(format!(
                "shift mask covers {} columns, dictionary has {}",
                m.len(),
                p * blocks
            )));
        }
    }
    let n = dict.support_len();
    for l in 0..blocks {
        let mut k = dict.kernel(l).to_vec();
        if normalize(&mut k) == T::zero() {
            return Err(Error::Contract("initial kernel is zero".into()));
        }
        dict.set_kernel(l, k);
    }
    let (yc, _) = center_columns(y);
    let energy = yc.frobenius_sq();
    if energy == T::zero() {
        return Err(Error::ZeroDataset);
    }
    let plan = Fourier::new(p)?;
    let mut yt = plan.columns(&yc)?;
    for col in yt.columns_mut() {
        col[0] = czero();
    }
    let s = config.sparsity;
    let mask = config.mask.as_ref();
    let mut rescue_rng = rng(config.seed ^ RESCUE_STREAM);
    let mut report = FitReport::new(energy.as_f64());
    let theta = T::lit(config.rescue_threshold);

    let t = Instant::now();
    let mut code = omp_batch(&dict.to_dense(), &yc, s, mask)?;
    report.timings.add_coding(t.elapsed());
    let mut xts = transform_blocks(&plan, &code, blocks, p)?;
    let mut current = conv_objective(&yt, &dict, &xts)?;

    for it in 1..=config.iterations {
        let before = current;
        let t = Instant::now();
        let active: Vec<usize> = code
            .block_energy(p)
            .iter()
            .enumerate()
            .filter(|(_, &e)| e > T::zero())
            .map(|(b, _)| b)
            .collect();
        if !active.is_empty() {
            let refs: Vec<&Matrix<C<T>>> = active.iter().map(|&b| &xts[b]).collect();
            let sol = solve_kernels(&dict, &yt, &refs, config, it, &mut report)?;
            for (i, &b) in active.iter().enumerate() {
                let mut k = sol[i * n..(i + 1) * n].to_vec();
                let r = normalize(&mut k);
                if r > T::zero() {
                    dict.set_kernel(b, k);
                    code.scale_rows(b * p, p, r);
                    for v in xts[b].as_mut_slice() {
                        *v *= r;
                    }
                } else {
                    code.scale_rows(b * p, p, T::zero());
                    for v in xts[b].as_mut_slice() {
                        *v = czero();
                    }
                    report.events.push(Event::ZeroKernel {
                        iteration: it,
                        block: b,
                    });
                }
            }
        }
        let after = conv_objective(&yt, &dict, &xts)?;
        report.timings.add_dictionary(t.elapsed());

        let t = Instant::now();
        code = omp_batch(&dict.to_dense(), &yc, s, mask)?;
        let energies = code.block_energy(p);
        let top = energies.iter().copied().fold(T::zero(), T::max);
        let unused: Vec<usize> = (0..blocks)
            .filter(|&b| energies[b] == T::zero() || energies[b] < theta * top)
            .collect();
        if !unused.is_empty() {
            for &b in &unused {
                dict.set_kernel(b, random_unit(&mut rescue_rng, n));
                report.events.push(Event::Rescue {
                    iteration: it,
                    block: b,
                });
            }
            code = omp_batch(&dict.to_dense(), &yc, s, mask)?;
        }
        report.timings.add_coding(t.elapsed());

        xts = transform_blocks(&plan, &code, blocks, p)?;
        current = conv_objective(&yt, &dict, &xts)?;
        report.push(it, before.as_f64(), after.as_f64(), current.as_f64());
        if report.should_stop(config.early_stop) {
            break;
        }
    }
    Ok(ConvFit { dict, code, report })
}
