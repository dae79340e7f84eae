//! Unions of circulants: simultaneous per-frequency updates, the sequential
//! block variant, and re-initialization of unused blocks.

use std::time::Instant;

use num_complex::Complex;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::circulant::cdla_spectrum_update;
use crate::error::{Error, Result};
use crate::learn::{center_columns, random_unit, rng, Event, FitConfig, FitReport};
use crate::linalg::{hermitian_solve, left_singular_vectors};
use crate::matrix::{normalize, Matrix};
use crate::metrics::shift_correlation;
use crate::scalar::Real;
use crate::sparse::{omp_batch, SparseCode};
use crate::spectral::{union_dictionary, CirculantOperator, Fourier, Spectrum};

type C<T> = Complex<T>;

const STAT_CHUNK: usize = 256;
const RESCUE_STREAM: u64 = 0x5e5c_0e00;

fn czero<T: Real>() -> C<T> {
    Complex::new(T::zero(), T::zero())
}

/// `[circ(c⁽¹⁾) … circ(c⁽ᴸ⁾)]` with unit-norm generators of equal length.
#[derive(Clone, Debug)]
pub struct UnionCirculantDict<T: Real> {
    ops: Vec<CirculantOperator<T>>,
}

impl<T: Real> UnionCirculantDict<T> {
    pub fn new(generators: Vec<Vec<T>>) -> Result<Self> {
        let n = generators
            .first()
            .ok_or_else(|| Error::Config("a union needs at least one circulant".into()))?
            .len();
        if let Some(g) = generators.iter().find(|g| g.len() != n) {
            return Err(Error::dim(n, g.len()));
        }
        let ops = generators
            .into_iter()
            .map(CirculantOperator::new)
            .collect::<Result<_>>()?;
        Ok(Self { ops })
    }

    pub fn blocks(&self) -> usize {
        self.ops.len()
    }

    pub fn size(&self) -> usize {
        self.ops[0].size()
    }

    pub fn generator(&self, l: usize) -> &[T] {
        self.ops[l].first_column()
    }

    pub fn generators(&self) -> Vec<Vec<T>> {
        self.ops.iter().map(|o| o.first_column().to_vec()).collect()
    }

    pub fn spectrum(&self, l: usize) -> &Spectrum<T> {
        self.ops[l].spectrum()
    }

    pub fn operator(&self, l: usize) -> &CirculantOperator<T> {
        &self.ops[l]
    }

    pub(crate) fn set_generator(&mut self, l: usize, c: Vec<T>) {
        self.ops[l] = CirculantOperator::new(c).expect("non-empty generator");
    }

    /// Dense `n × nL` dictionary; column `ℓn + q` is generator `ℓ` shifted by `q`.
    pub fn to_dense(&self) -> Matrix<T> {
        union_dictionary(&self.generators())
    }

    /// `D X`.
    pub fn synthesize(&self, code: &SparseCode<T>) -> Result<Matrix<T>> {
        code.synthesize(&self.to_dense())
    }
}

/// Solution of one frequency bin's `L`-unknown least-squares problem.
#[derive(Clone, Debug, PartialEq)]
pub struct BinSolution<T> {
    pub values: Vec<C<T>>,
    /// Ridge added to a singular Gram matrix.
    pub ridge: Option<T>,
    /// All code rows of the bin vanished.
    pub empty: bool,
}

fn solve_bin<T: Real>(gram: &[C<T>], rhs: &[C<T>]) -> Result<BinSolution<T>> {
    let l = rhs.len();
    let trace: T = (0..l).map(|a| gram[a * l + a].re).sum();
    if !(trace > T::zero()) {
        return Ok(BinSolution {
            values: vec![czero(); l],
            ridge: None,
            empty: true,
        });
    }
    if l == 1 {
        return Ok(BinSolution {
            values: vec![rhs[0] / gram[0].re],
            ridge: None,
            empty: false,
        });
    }
    match hermitian_solve(gram, rhs) {
        Ok(values) => Ok(BinSolution {
            values,
            ridge: None,
            empty: false,
        }),
        Err(Error::NotPositiveDefinite { .. }) => {
            let ridge = T::lit(1e-12) * trace / T::from_usize_lossy(l);
            let mut g = gram.to_vec();
            for a in 0..l {
                g[a * l + a].re += ridge;
            }
            Ok(BinSolution {
                values: hermitian_solve(&g, rhs)?,
                ridge: Some(ridge),
                empty: false,
            })
        }
        Err(e) => Err(e),
    }
}

/// Least squares over `σ⁽¹⁾…σ⁽ᴸ⁾` of `‖ỹ_k − Σ_ℓ σ⁽ℓ⁾ x̃_k⁽ℓ⁾‖²` for one bin.
///
/// A singular Gram matrix is shifted by `1e-12·trace/L`.
pub fn per_bin_ls_update<T: Real>(yk: &[C<T>], xk: &[&[C<T>]]) -> Result<BinSolution<T>> {
    let l = xk.len();
    if l == 0 {
        return Err(Error::Config("no blocks".into()));
    }
    if let Some(x) = xk.iter().find(|x| x.len() != yk.len()) {
        return Err(Error::dim(yk.len(), x.len()));
    }
    let mut gram = vec![czero(); l * l];
    let mut rhs = vec![czero(); l];
    for a in 0..l {
        rhs[a] = xk[a].iter().zip(yk).map(|(x, y)| x.conj() * y).sum();
        for b in 0..l {
            gram[a * l + b] = xk[a].iter().zip(xk[b]).map(|(x, z)| x.conj() * z).sum();
        }
    }
    solve_bin(&gram, &rhs)
}

/// Eigenvalues of every block from one joint update.
#[derive(Clone, Debug, PartialEq)]
pub struct UnionSpectrumUpdate<T> {
    pub spectra: Vec<Spectrum<T>>,
    pub ridge_bins: usize,
    pub empty_bins: usize,
}

/// Per-bin Gram matrices and right-hand sides for bins `0..=n/2`, summed over
/// column chunks in a fixed order.
pub(crate) fn bin_statistics<T: Real>(yt: &Matrix<C<T>>, xts: &[&Matrix<C<T>>]) -> (Vec<C<T>>, Vec<C<T>>) {
    let l = xts.len();
    let bins = yt.rows() / 2 + 1;
    let starts: Vec<usize> = (0..yt.cols()).step_by(STAT_CHUNK).collect();
    type Partial<T> = (Vec<C<T>>, Vec<C<T>>);
    let partial: Vec<Partial<T>> = starts
        .par_iter()
        .map(|&start| {
            let mut g = vec![czero(); bins * l * l];
            let mut r = vec![czero(); bins * l];
            let mut xs = vec![czero(); l];
            for j in start..(start + STAT_CHUNK).min(yt.cols()) {
                let ycol = yt.col(j);
                for k in 0..bins {
                    for (a, x) in xts.iter().enumerate() {
                        xs[a] = x[(k, j)];
                    }
                    let gk = &mut g[k * l * l..(k + 1) * l * l];
                    for a in 0..l {
                        let xa = xs[a].conj();
                        r[k * l + a] += xa * ycol[k];
                        for b in a..l {
                            gk[a * l + b] += xa * xs[b];
                        }
                    }
                }
            }
            (g, r)
        })
        .collect();
    let mut g = vec![czero(); bins * l * l];
    let mut r = vec![czero(); bins * l];
    for (pg, pr) in partial {
        for (a, b) in g.iter_mut().zip(pg) {
            *a += b;
        }
        for (a, b) in r.iter_mut().zip(pr) {
            *a += b;
        }
    }
    for k in 0..bins {
        let gk = &mut g[k * l * l..(k + 1) * l * l];
        for a in 0..l {
            for b in 0..a {
                gk[a * l + b] = gk[b * l + a].conj();
            }
        }
    }
    (g, r)
}

/// Joint least-squares update of all `L` spectra at fixed code.
///
/// Solves one `L × L` system per bin `k ≤ n/2` and mirrors the rest by
/// conjugation. The DC bin is left to the data: with centered `Y` it is zero.
pub fn union_spectrum_update<T: Real>(
    yt: &Matrix<C<T>>,
    xts: &[&Matrix<C<T>>],
) -> Result<UnionSpectrumUpdate<T>> {
    let l = xts.len();
    if l == 0 {
        return Err(Error::Config("no blocks".into()));
    }
    if let Some(x) = xts.iter().find(|x| x.shape() != yt.shape()) {
        return Err(Error::dim(
            format!("{:?}", yt.shape()),
            format!("{:?}", x.shape()),
        ));
    }
    let n = yt.rows();
    let bins = n / 2 + 1;
    let (g, r) = bin_statistics(yt, xts);
    let solutions: Vec<BinSolution<T>> = (0..bins)
        .into_par_iter()
        .map(|k| solve_bin(&g[k * l * l..(k + 1) * l * l], &r[k * l..(k + 1) * l]))
        .collect::<Result<_>>()?;
    let mut values = vec![vec![czero(); n]; l];
    let mut ridge_bins = 0;
    let mut empty_bins = 0;
    for (k, sol) in solutions.iter().enumerate() {
        ridge_bins += usize::from(sol.ridge.is_some());
        empty_bins += usize::from(sol.empty);
        for (b, &v) in sol.values.iter().enumerate() {
            if k == 0 || 2 * k == n {
                values[b][k] = Complex::new(v.re, T::zero());
            } else {
                values[b][k] = v;
                values[b][n - k] = v.conj();
            }
        }
    }
    Ok(UnionSpectrumUpdate {
        spectra: values
            .into_iter()
            .map(Spectrum::from_values)
            .collect::<Result<_>>()?,
        ridge_bins,
        empty_bins,
    })
}

/// Unit directions for re-initializing unused blocks: the leading left
/// singular vectors of the residual, random where the residual has no energy.
pub(crate) fn rescue_directions<T: Real>(r: &Matrix<T>, count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<T>> {
    let n = r.rows();
    let (sv, u) = left_singular_vectors(r);
    let top = sv.first().copied().unwrap_or_else(T::zero);
    (0..count)
        .map(|i| {
            if i < n && top > T::zero() && sv[i] > T::lit(1e-12) * top {
                u.col(i).to_vec()
            } else {
                random_unit(rng, n)
            }
        })
        .collect()
}

/// Dominant left singular vector of the residual `R`, or a seeded random unit
/// vector when `R = 0`.
pub fn rescue_unused_block<T: Real>(r: &Matrix<T>, seed: u64) -> Vec<T> {
    let mut g = rng(seed);
    rescue_directions(r, 1, &mut g).pop().expect("one direction")
}

/// Learned union, its code on the centered data, and the iteration report.
#[derive(Clone, Debug)]
pub struct UnionFit<T: Real> {
    pub dict: UnionCirculantDict<T>,
    pub code: SparseCode<T>,
    pub report: FitReport,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum UpdateRule {
    Simultaneous,
    Sequential,
}

/// Left singular vectors of the centered data for `ℓ ≤ n`, seeded random unit
/// vectors for the remaining or rank-deficient directions.
pub(crate) fn initial_generators<T: Real>(y: &Matrix<T>, blocks: usize, seed: u64) -> Result<Vec<Vec<T>>> {
    if y.rows() == 0 || y.cols() == 0 {
        return Err(Error::Size("empty training data".into()));
    }
    let (yc, _) = center_columns(y);
    let mut g = rng(seed);
    Ok(rescue_directions(&yc, blocks, &mut g))
}

pub(crate) fn transform_blocks<T: Real>(
    plan: &Fourier<T>,
    code: &SparseCode<T>,
    blocks: usize,
    n: usize,
) -> Result<Vec<Matrix<C<T>>>> {
    (0..blocks)
        .map(|b| plan.columns(&code.dense_rows(b * n, n)))
        .collect()
}

/// `Σ_k ‖ỹ_k − Σ_ℓ σ_k⁽ℓ⁾ x̃_k⁽ℓ⁾‖²`, equal to `‖Y − DX‖²_F`.
pub(crate) fn fourier_objective<T: Real>(yt: &Matrix<C<T>>, spectra: &[&[C<T>]], xts: &[Matrix<C<T>>]) -> T {
    let n = yt.rows();
    let mut total = T::zero();
    let mut buf = vec![czero(); n];
    for j in 0..yt.cols() {
        buf.copy_from_slice(yt.col(j));
        for (s, x) in spectra.iter().zip(xts) {
            for ((b, &sv), &xv) in buf.iter_mut().zip(s.iter()).zip(x.col(j)) {
                *b -= sv * xv;
            }
        }
        total += buf.iter().map(|v| v.norm_sqr()).sum::<T>();
    }
    total
}

fn objective<T: Real>(yt: &Matrix<C<T>>, dict: &UnionCirculantDict<T>, xts: &[Matrix<C<T>>]) -> T {
    let spectra: Vec<&[C<T>]> = (0..dict.blocks()).map(|b| dict.spectrum(b).values()).collect();
    fourier_objective(yt, &spectra, xts)
}

/// Installs an updated spectrum: the generator is normalized and its norm
/// folded into the code rows of the block.
fn install<T: Real>(
    dict: &mut UnionCirculantDict<T>,
    code: &mut SparseCode<T>,
    xt: &mut Matrix<C<T>>,
    block: usize,
    spectrum: &Spectrum<T>,
    iteration: usize,
    report: &mut FitReport,
) -> Result<()> {
    let n = dict.size();
    let mut values = spectrum.values().to_vec();
    values[0] = czero();
    let (mut c, _) = Spectrum::from_values(values)?.generator_with_residue()?;
    let r = normalize(&mut c);
    if r > T::zero() {
        dict.set_generator(block, c);
        code.scale_rows(block * n, n, r);
        for v in xt.as_mut_slice() {
            *v *= r;
        }
    } else {
        // the optimal contribution of this block is zero
        code.scale_rows(block * n, n, T::zero());
        *code = code.without_zeros();
        for v in xt.as_mut_slice() {
            *v = czero();
        }
        report.events.push(Event::ZeroKernel { iteration, block });
    }
    Ok(())
}

pub(crate) fn circulant_family_fit<T: Real>(
    y: &Matrix<T>,
    init: Vec<Vec<T>>,
    rule: UpdateRule,
    config: &FitConfig,
) -> Result<UnionFit<T>> {
    let n = y.rows();
    let blocks = init.len();
    if blocks < 1 {
        return Err(Error::Config("number of circulants L must be at least 1".into()));
    }
    if n == 0 || y.cols() == 0 {
        return Err(Error::Size("empty training data".into()));
    }
    config.validate(n)?;
    if let Some(m) = &config.mask {
        if m.len() != n * blocks {
            return Err(Error::Config(format!(
                "shift mask covers {} columns, dictionary has {}",
                m.len(),
                n * blocks
            )));
        }
    }
    let mut generators = init;
    for g in &mut generators {
        if g.len() != n {
            return Err(Error::dim(n, g.len()));
        }
        if normalize(g) == T::zero() {
            return Err(Error::Contract("initial generator is zero".into()));
        }
    }
    let (yc, _) = center_columns(y);
    let energy = yc.frobenius_sq();
    if energy == T::zero() {
        return Err(Error::ZeroDataset);
    }
    let plan = Fourier::new(n)?;
    let mut yt = plan.columns(&yc)?;
    for col in yt.columns_mut() {
        col[0] = czero();
    }
    let s = config.sparsity;
    let mask = config.mask.as_ref();
    let mut rescue_rng = rng(config.seed ^ RESCUE_STREAM);
    let mut dict = UnionCirculantDict::new(generators)?;
    let mut report = FitReport::new(energy.as_f64());
    let theta = T::lit(config.rescue_threshold);

    let t = Instant::now();
    let mut code = omp_batch(&dict.to_dense(), &yc, s, mask)?;
    report.timings.add_coding(t.elapsed());
    let mut xts = transform_blocks(&plan, &code, blocks, n)?;
    let mut current = objective(&yt, &dict, &xts);

    for it in 1..=config.iterations {
        let before = current;
        let t = Instant::now();
        let active: Vec<usize> = code
            .block_energy(n)
            .iter()
            .enumerate()
            .filter(|(_, &e)| e > T::zero())
            .map(|(b, _)| b)
            .collect();
        match rule {
            UpdateRule::Simultaneous => {
                let refs: Vec<&Matrix<C<T>>> = active.iter().map(|&b| &xts[b]).collect();
                if !refs.is_empty() {
                    let up = union_spectrum_update(&yt, &refs)?;
                    if up.ridge_bins > 0 {
                        report.events.push(Event::Ridge {
                            iteration: it,
                            stage: None,
                            ridge: up.ridge_bins as f64,
                        });
                    }
                    if up.empty_bins > 0 {
                        report.events.push(Event::ZeroBins {
                            iteration: it,
                            block: None,
                            bins: up.empty_bins,
                        });
                    }
                    for (&b, spec) in active.iter().zip(&up.spectra) {
                        install(&mut dict, &mut code, &mut xts[b], b, spec, it, &mut report)?;
                    }
                }
            }
            UpdateRule::Sequential => {
                let mut recon = Matrix::<C<T>>::zeros(n, yt.cols());
                for (b, x) in xts.iter().enumerate() {
                    accumulate(&mut recon, dict.spectrum(b).values(), x, T::one());
                }
                for &b in &active {
                    let old = dict.spectrum(b).values().to_vec();
                    let mut resid = yt.clone();
                    for (r, z) in resid.as_mut_slice().iter_mut().zip(recon.as_slice()) {
                        *r -= *z;
                    }
                    accumulate(&mut resid, &old, &xts[b], T::one());
                    let up = cdla_spectrum_update(&resid, &xts[b])?;
                    if !up.zero_bins.is_empty() {
                        report.events.push(Event::ZeroBins {
                            iteration: it,
                            block: Some(b),
                            bins: up.zero_bins.len(),
                        });
                    }
                    accumulate(&mut recon, &old, &xts[b], -T::one());
                    install(
                        &mut dict,
                        &mut code,
                        &mut xts[b],
                        b,
                        &up.spectrum,
                        it,
                        &mut report,
                    )?;
                    accumulate(&mut recon, dict.spectrum(b).values(), &xts[b], T::one());
                }
            }
        }
        let after = objective(&yt, &dict, &xts);
        report.timings.add_dictionary(t.elapsed());

        let t = Instant::now();
        let dense = dict.to_dense();
        code = omp_batch(&dense, &yc, s, mask)?;
        let energies = code.block_energy(n);
        let top = energies.iter().copied().fold(T::zero(), T::max);
        let mut unused: Vec<usize> = (0..blocks)
            .filter(|&b| energies[b] == T::zero() || energies[b] < theta * top)
            .collect();
        // unused blocks leave the residual; duplicates stay so that the
        // residual points at what the union still misses
        let excluded = unused.clone();
        if let Some(tau) = config.duplicate_threshold {
            for (b, of) in duplicate_blocks(&dict, &energies, &unused, T::lit(tau)) {
                unused.push(b);
                report.events.push(Event::Duplicate {
                    iteration: it,
                    block: b,
                    of,
                });
            }
            unused.sort_unstable();
        }
        if !unused.is_empty() {
            let kept = code.filter_rows(|r| !excluded.contains(&(r / n)));
            let resid = yc.sub(&kept.synthesize(&dense)?)?;
            let dirs = rescue_directions(&resid, unused.len(), &mut rescue_rng);
            for (&b, d) in unused.iter().zip(dirs) {
                dict.set_generator(b, d);
                report.events.push(Event::Rescue {
                    iteration: it,
                    block: b,
                });
            }
            code = omp_batch(&dict.to_dense(), &yc, s, mask)?;
        }
        report.timings.add_coding(t.elapsed());

        xts = transform_blocks(&plan, &code, blocks, n)?;
        current = objective(&yt, &dict, &xts);
        report.push(it, before.as_f64(), after.as_f64(), current.as_f64());
        if report.should_stop(config.early_stop) {
            break;
        }
    }
    Ok(UnionFit { dict, code, report })
}

/// Pairs of generators equal up to shift and sign (correlation `≥ tau`). For
/// each pair the block with less code energy is returned with its partner.
fn duplicate_blocks<T: Real>(
    dict: &UnionCirculantDict<T>,
    energies: &[T],
    skip: &[usize],
    tau: T,
) -> Vec<(usize, usize)> {
    let blocks = dict.blocks();
    let mut out: Vec<(usize, usize)> = Vec::new();
    let taken = |b: usize, out: &[(usize, usize)]| skip.contains(&b) || out.iter().any(|&(d, _)| d == b);
    for a in 0..blocks {
        for b in a + 1..blocks {
            if taken(a, &out) || taken(b, &out) {
                continue;
            }
            if shift_correlation(dict.generator(a), dict.generator(b)) >= tau {
                if energies[b] <= energies[a] {
                    out.push((b, a));
                } else {
                    out.push((a, b));
                }
            }
        }
    }
    out
}

/// `acc += sign · diag(σ) X̃`.
fn accumulate<T: Real>(acc: &mut Matrix<C<T>>, sigma: &[C<T>], xt: &Matrix<C<T>>, sign: T) {
    for (a, x) in acc.columns_mut().zip(xt.columns()) {
        for ((av, &s), &xv) in a.iter_mut().zip(sigma).zip(x) {
            *av += s * xv * sign;
        }
    }
}

/// Union of `L` circulants learned with simultaneous per-frequency updates.
pub fn ucirc_fit<T: Real>(y: &Matrix<T>, blocks: usize, config: &FitConfig) -> Result<UnionFit<T>> {
    if blocks < 1 {
        return Err(Error::Config("number of circulants L must be at least 1".into()));
    }
    let init = initial_generators(y, blocks, config.seed)?;
    circulant_family_fit(y, init, UpdateRule::Simultaneous, config)
}

pub fn ucirc_fit_with_init<T: Real>(
    y: &Matrix<T>,
    init: Vec<Vec<T>>,
    config: &FitConfig,
) -> Result<UnionFit<T>> {
    circulant_family_fit(y, init, UpdateRule::Simultaneous, config)
}

/// Union of `L` circulants updated one block at a time against the residual
/// of the others.
pub fn ucdla_block_fit<T: Real>(y: &Matrix<T>, blocks: usize, config: &FitConfig) -> Result<UnionFit<T>> {
    if blocks < 1 {
        return Err(Error::Config("number of circulants L must be at least 1".into()));
    }
    let init = initial_generators(y, blocks, config.seed)?;
    circulant_family_fit(y, init, UpdateRule::Sequential, config)
}

pub fn ucdla_block_fit_with_init<T: Real>(
    y: &Matrix<T>,
    init: Vec<Vec<T>>,
    config: &FitConfig,
) -> Result<UnionFit<T>> {
    circulant_family_fit(y, init, UpdateRule::Sequential, config)
}
