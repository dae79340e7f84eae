//! Dataset construction: synthetic shift-invariant signals with ground truth,
//! centering, ECG segmentation and image patches.

use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::learn::center_columns;
use crate::matrix::{normalize, Matrix};
use crate::scalar::Real;
use crate::spectral::shift_vector;

/// How the noise is scaled to reach the target SNR.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum NoiseScaling {
    /// One factor for the whole dataset.
    #[default]
    Dataset,
    /// Every column individually.
    PerColumn,
}

/// Parameters of the synthetic generator: each of `signals` columns of length
/// `n` combines `sparsity` distinct kernels out of `kernels`, each at one of
/// the first `shifts` cyclic shifts.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub signals: usize,
    pub kernels: usize,
    pub sparsity: usize,
    pub shifts: usize,
    pub coeff_range: (f64, f64),
    /// `None` for noiseless data.
    pub snr_db: Option<f64>,
    pub noise_scaling: NoiseScaling,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(n: usize, signals: usize, kernels: usize, sparsity: usize, shifts: usize) -> Self {
        Self {
            n,
            signals,
            kernels,
            sparsity,
            shifts,
            coeff_range: (-10.0, 10.0),
            snr_db: None,
            noise_scaling: NoiseScaling::Dataset,
            seed: 0,
        }
    }

    pub fn with_snr(mut self, snr_db: Option<f64>) -> Self {
        self.snr_db = snr_db;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n < 2 || self.signals < 1 || self.kernels < 1 {
            return fail(format!(
                "need n >= 2, N >= 1 and L >= 1 (got n = {}, N = {}, L = {})",
                self.n, self.signals, self.kernels
            ));
        }
        if self.shifts < 1 || self.shifts > self.n {
            return fail(format!(
                "shift count q = {} must lie in 1..={}",
                self.shifts, self.n
            ));
        }
        if self.sparsity < 1 || self.sparsity > self.kernels {
            return fail(format!(
                "sparsity s = {} must lie in 1..={} (distinct kernels per column)",
                self.sparsity, self.kernels
            ));
        }
        let (lo, hi) = self.coeff_range;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return fail(format!("invalid coefficient range [{lo}, {hi}]"));
        }
        if self.snr_db.is_some_and(|s| !s.is_finite()) {
            return fail("SNR must be finite".into());
        }
        Ok(())
    }
}

/// One kernel occurrence in a synthetic column.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Occurrence {
    pub kernel: usize,
    pub shift: usize,
    pub coefficient: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth<T> {
    /// Unit-norm, zero-mean kernels.
    pub kernels: Vec<Vec<T>>,
    pub columns: Vec<Vec<Occurrence>>,
    /// Noise actually added, `Y − clean`.
    pub noise: Matrix<T>,
}

impl<T: Real> GroundTruth<T> {
    /// Noiseless column `Σ α P^q c_ℓ`.
    pub fn clean_column(&self, j: usize) -> Vec<T> {
        let n = self.kernels[0].len();
        let mut y = vec![T::zero(); n];
        for o in &self.columns[j] {
            let atom = shift_vector(&self.kernels[o.kernel], o.shift as i64);
            let a = T::lit(o.coefficient);
            for (v, &k) in y.iter_mut().zip(&atom) {
                *v += a * k;
            }
        }
        y
    }

    pub fn clean_signals(&self) -> Matrix<T> {
        let cols: Vec<Vec<T>> = (0..self.columns.len()).map(|j| self.clean_column(j)).collect();
        Matrix::from_columns(self.kernels[0].len(), &cols).expect("consistent lengths")
    }
}

fn column_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn gaussian(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

/// Generates `Y` and its ground truth. Deterministic in `spec.seed`, whatever
/// the number of threads.
///
/// Kernels are Gaussian, centered and normalized. Noise is white Gaussian
/// scaled so that `10·log₁₀(‖clean‖²/‖noise‖²)` equals the target SNR.
pub fn gen_synthetic<T: Real>(spec: &SyntheticSpec) -> Result<(Matrix<T>, GroundTruth<T>)> {
    spec.validate()?;
    let n = spec.n;
    let mut krng = column_rng(spec.seed, 0);
    let kernels: Vec<Vec<f64>> = (0..spec.kernels)
        .map(|_| loop {
            let mut k: Vec<f64> = (0..n).map(|_| gaussian(&mut krng)).collect();
            let mean = k.iter().sum::<f64>() / n as f64;
            k.iter_mut().for_each(|v| *v -= mean);
            if normalize(&mut k) > 0.0 {
                break k;
            }
        })
        .collect();

    let (lo, hi) = spec.coeff_range;
    let generated: Vec<(Vec<Occurrence>, Vec<f64>, Vec<f64>)> = (0..spec.signals)
        .into_par_iter()
        .map(|j| {
            let mut r = column_rng(spec.seed, 1 + j as u64);
            let chosen = rand::seq::index::sample(&mut r, spec.kernels, spec.sparsity);
            let mut occ = Vec::with_capacity(spec.sparsity);
            let mut clean = vec![0.0; n];
            for kernel in chosen.iter() {
                let shift = r.random_range(0..spec.shifts);
                let coefficient = r.random_range(lo..=hi);
                let atom = shift_vector(&kernels[kernel], shift as i64);
                for (v, a) in clean.iter_mut().zip(atom) {
                    *v += coefficient * a;
                }
                occ.push(Occurrence {
                    kernel,
                    shift,
                    coefficient,
                });
            }
            let noise: Vec<f64> = if spec.snr_db.is_some() {
                (0..n).map(|_| gaussian(&mut r)).collect()
            } else {
                vec![0.0; n]
            };
            (occ, clean, noise)
        })
        .collect();

    let mut columns = Vec::with_capacity(spec.signals);
    let mut clean = Vec::with_capacity(spec.signals);
    let mut noise = Vec::with_capacity(spec.signals);
    for (o, c, z) in generated {
        columns.push(o);
        clean.push(c);
        noise.push(z);
    }
    if let Some(snr) = spec.snr_db {
        let target = 10f64.powf(snr / 10.0);
        let energy = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        match spec.noise_scaling {
            NoiseScaling::Dataset => {
                let s: f64 = clean.iter().map(|c| energy(c)).sum();
                let z: f64 = noise.iter().map(|c| energy(c)).sum();
                let f = if z > 0.0 { (s / (z * target)).sqrt() } else { 0.0 };
                noise.iter_mut().flatten().for_each(|v| *v *= f);
            }
            NoiseScaling::PerColumn => {
                for (c, z) in clean.iter().zip(noise.iter_mut()) {
                    let (s, e) = (energy(c), energy(z));
                    let f = if e > 0.0 { (s / (e * target)).sqrt() } else { 0.0 };
                    z.iter_mut().for_each(|v| *v *= f);
                }
            }
        }
    }
    let to_t = |cols: &[Vec<f64>]| {
        let data = cols.iter().flatten().map(|&v| T::lit(v)).collect();
        Matrix::from_col_major(n, cols.len(), data).expect("consistent lengths")
    };
    let noise_m = to_t(&noise);
    let y_f64: Vec<Vec<f64>> = clean
        .iter()
        .zip(&noise)
        .map(|(c, z)| c.iter().zip(z).map(|(a, b)| a + b).collect())
        .collect();
    let truth = GroundTruth {
        kernels: kernels
            .iter()
            .map(|k| k.iter().map(|&v| T::lit(v)).collect())
            .collect(),
        columns,
        noise: noise_m,
    };
    Ok((to_t(&y_f64), truth))
}

/// Removes the mean of every column; returns the centered data and the means.
pub fn remove_dc<T: Real>(y: &Matrix<T>) -> (Matrix<T>, Vec<T>) {
    center_columns(y)
}

/// Adds `means[j]` back to column `j`.
pub fn restore_dc<T: Real>(y: &Matrix<T>, means: &[T]) -> Result<Matrix<T>> {
    if means.len() != y.cols() {
        return Err(Error::dim(y.cols(), means.len()));
    }
    let mut out = y.clone();
    for (col, &m) in out.columns_mut().zip(means) {
        col.iter_mut().for_each(|v| *v += m);
    }
    Ok(out)
}

/// Cuts `signal` into `⌊len/p⌋` consecutive sections of length `p`, each
/// centered. The remainder is dropped.
pub fn ecg_segments<T: Real>(signal: &[T], p: usize) -> Result<Matrix<T>> {
    if p == 0 {
        return Err(Error::Size("segment length must be positive".into()));
    }
    if signal.len() < p {
        return Err(Error::Size(format!(
            "signal of length {} is shorter than one segment of {p}",
            signal.len()
        )));
    }
    let count = signal.len() / p;
    let m = Matrix::from_col_major(p, count, signal[..count * p].to_vec())?;
    Ok(center_columns(&m).0)
}

/// Synthetic ECG-like trace sampled at 128 Hz: quasi-periodic beats with
/// P, QRS and T waves, slow baseline wander and a little sensor noise.
pub fn synthetic_ecg<T: Real>(len: usize, seed: u64) -> Vec<T> {
    let fs = 128.0;
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0f64; len];
    let bump = |x: &mut [f64], center: f64, width: f64, amp: f64| {
        let lo = (center - 5.0 * width).floor().max(0.0) as usize;
        let hi = ((center + 5.0 * width).ceil() as usize).min(x.len());
        for (i, v) in x.iter_mut().enumerate().take(hi).skip(lo) {
            let t = (i as f64 - center) / width;
            *v += amp * (-0.5 * t * t).exp();
        }
    };
    let mut t = 0.3 * fs * r.random::<f64>();
    while t < len as f64 + fs {
        let rr = fs * (0.8 + 0.08 * gaussian(&mut r)).clamp(0.55, 1.1);
        let amp = 1.0 + 0.1 * gaussian(&mut r);
        bump(&mut x, t - 0.16 * fs, 0.025 * fs, 0.12 * amp);
        bump(&mut x, t - 0.025 * fs, 0.008 * fs, -0.15 * amp);
        bump(&mut x, t, 0.01 * fs, 1.1 * amp);
        bump(&mut x, t + 0.03 * fs, 0.009 * fs, -0.25 * amp);
        bump(&mut x, t + 0.25 * fs, 0.045 * fs, 0.3 * amp);
        t += rr;
    }
    let f1 = 0.15 + 0.1 * r.random::<f64>();
    let ph = 2.0 * PI * r.random::<f64>();
    for (i, v) in x.iter_mut().enumerate() {
        let s = i as f64 / fs;
        *v += 0.1 * (2.0 * PI * f1 * s + ph).sin() + 0.005 * gaussian(&mut r);
    }
    x.into_iter().map(T::lit).collect()
}

/// Non-overlapping `patch × patch` blocks of `img`, vectorized column-major
/// and centered. The image is cropped to a multiple of `patch`; blocks are
/// ordered down the rows first. Returns the patches and their means.
pub fn image_patches<T: Real>(img: &Matrix<T>, patch: usize) -> Result<(Matrix<T>, Vec<T>)> {
    if patch == 0 || patch > img.rows().min(img.cols()) {
        return Err(Error::Size(format!(
            "patch size {patch} does not fit a {}x{} image",
            img.rows(),
            img.cols()
        )));
    }
    let (br, bc) = (img.rows() / patch, img.cols() / patch);
    let mut data = Vec::with_capacity(br * bc * patch * patch);
    for bj in 0..bc {
        for bi in 0..br {
            for j in 0..patch {
                for i in 0..patch {
                    data.push(img[(bi * patch + i, bj * patch + j)]);
                }
            }
        }
    }
    let m = Matrix::from_col_major(patch * patch, br * bc, data)?;
    Ok(center_columns(&m))
}

/// Inverse of [`image_patches`] on the cropped `rows × cols` image.
pub fn reassemble_patches<T: Real>(
    patches: &Matrix<T>,
    means: &[T],
    rows: usize,
    cols: usize,
    patch: usize,
) -> Result<Matrix<T>> {
    let (br, bc) = (rows / patch, cols / patch);
    if patches.rows() != patch * patch || patches.cols() != br * bc {
        return Err(Error::dim(
            format!("{}x{}", patch * patch, br * bc),
            format!("{}x{}", patches.rows(), patches.cols()),
        ));
    }
    let full = restore_dc(patches, means)?;
    let mut img = Matrix::zeros(br * patch, bc * patch);
    for bj in 0..bc {
        for bi in 0..br {
            let col = full.col(bj * br + bi);
            for j in 0..patch {
                for i in 0..patch {
                    img[(bi * patch + i, bj * patch + j)] = col[j * patch + i];
                }
            }
        }
    }
    Ok(img)
}

/// Deterministic grayscale test images (values in `0..=255`): smooth shading,
/// gratings, edges, discs and band-limited texture, mixed.
pub fn procedural_images<T: Real>(count: usize, size: usize, seed: u64) -> Vec<Matrix<T>> {
    (0..count)
        .map(|idx| {
            let mut r = column_rng(seed, idx as u64);
            let s = size as f64;
            // a handful of random ingredients, summed
            let gx = r.random_range(-1.0..1.0);
            let gy = r.random_range(-1.0..1.0);
            let freq = r.random_range(2.0..12.0) * PI / s;
            let angle = r.random_range(0.0..PI);
            let (ca, sa) = (angle.cos(), angle.sin());
            let edges: Vec<(f64, f64, f64, f64)> = (0..3)
                .map(|_| {
                    let a = r.random_range(0.0..2.0 * PI);
                    (
                        a.cos(),
                        a.sin(),
                        r.random_range(0.2..0.8) * s,
                        r.random_range(-60.0..60.0),
                    )
                })
                .collect();
            let discs: Vec<(f64, f64, f64, f64)> = (0..4)
                .map(|_| {
                    (
                        r.random_range(0.0..s),
                        r.random_range(0.0..s),
                        r.random_range(0.05..0.25) * s,
                        r.random_range(-50.0..50.0),
                    )
                })
                .collect();
            let waves: Vec<(f64, f64, f64, f64)> = (0..6)
                .map(|_| {
                    (
                        r.random_range(-0.5..0.5),
                        r.random_range(-0.5..0.5),
                        r.random_range(0.0..2.0 * PI),
                        r.random_range(2.0..10.0),
                    )
                })
                .collect();
            let kind = idx % 4;
            Matrix::from_fn(size, size, |i, j| {
                let (x, y) = (j as f64, i as f64);
                let mut v = 128.0 + 40.0 * (gx * (x / s - 0.5) + gy * (y / s - 0.5));
                let u = ca * x + sa * y;
                v += match kind {
                    0 => 35.0 * (freq * u).sin(),
                    1 => 35.0 * (freq * u).sin().signum(),
                    _ => 10.0 * (freq * u).sin(),
                };
                for &(ex, ey, off, amp) in &edges {
                    if ex * x + ey * y > off {
                        v += amp * if kind == 3 { 0.3 } else { 1.0 };
                    }
                }
                for &(cx, cy, rad, amp) in &discs {
                    if (x - cx).powi(2) + (y - cy).powi(2) < rad * rad {
                        v += amp;
                    }
                }
                for &(fx, fy, ph, amp) in &waves {
                    v += amp * (fx * x + fy * y + ph).sin();
                }
                T::lit(v.clamp(0.0, 255.0))
            })
        })
        .collect()
}
