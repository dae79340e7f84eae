//! Single circulant dictionary learning with the closed-form Fourier update.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::learn::{FitConfig, FitReport};
use crate::matrix::Matrix;
use crate::scalar::Real;
use crate::sparse::SparseCode;
use crate::spectral::Spectrum;
use crate::ucirc::{circulant_family_fit, initial_generators, UpdateRule};

/// Eigenvalues minimizing `‖Ỹ − diag(σ) X̃‖_F` with the bin count of empty rows.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumUpdate<T> {
    pub spectrum: Spectrum<T>,
    /// Bins `k` with `x̃_k = 0`; their eigenvalue is set to zero.
    pub zero_bins: Vec<usize>,
}

fn check_pair<T>(yt: &Matrix<Complex<T>>, xt: &Matrix<Complex<T>>) -> Result<()>
where
    T: Copy,
{
    if yt.shape() != xt.shape() {
        return Err(Error::dim(
            format!("{:?}", yt.shape()),
            format!("{:?}", xt.shape()),
        ));
    }
    if yt.rows() == 0 {
        return Err(Error::Size("empty spectra".into()));
    }
    Ok(())
}

/// Per-bin sums `x̃_kᴴ ỹ_k`, `‖x̃_k‖²` and `‖ỹ_k‖²`.
pub(crate) fn bin_sums<T: Real>(
    yt: &Matrix<Complex<T>>,
    xt: &Matrix<Complex<T>>,
) -> (Vec<Complex<T>>, Vec<T>, Vec<T>) {
    let n = yt.rows();
    let mut xy = vec![Complex::new(T::zero(), T::zero()); n];
    let mut xx = vec![T::zero(); n];
    let mut yy = vec![T::zero(); n];
    for (ycol, xcol) in yt.columns().zip(xt.columns()) {
        for k in 0..n {
            xy[k] += xcol[k].conj() * ycol[k];
            xx[k] += xcol[k].norm_sqr();
            yy[k] += ycol[k].norm_sqr();
        }
    }
    (xy, xx, yy)
}

/// Closed-form circulant update in the Fourier domain.
///
/// `yt` and `xt` are unitary transforms of `Y` and `X`. Each eigenvalue is
/// `σ_k = x̃_kᴴ ỹ_k / ‖x̃_k‖²`, computed for `k ≤ n/2` and mirrored by
/// conjugation so the generator stays real. The result is not normalized.
pub fn cdla_spectrum_update<T: Real>(
    yt: &Matrix<Complex<T>>,
    xt: &Matrix<Complex<T>>,
) -> Result<SpectrumUpdate<T>> {
    check_pair(yt, xt)?;
    let n = yt.rows();
    let (xy, xx, _) = bin_sums(yt, xt);
    let mut values = vec![Complex::new(T::zero(), T::zero()); n];
    let mut zero_bins = Vec::new();
    for k in 0..=n / 2 {
        let v = if xx[k] > T::zero() {
            xy[k] / xx[k]
        } else {
            zero_bins.push(k);
            Complex::new(T::zero(), T::zero())
        };
        values[k] = v;
        if k != 0 && 2 * k != n {
            values[n - k] = v.conj();
        } else {
            values[k].im = T::zero();
        }
    }
    Ok(SpectrumUpdate {
        spectrum: Spectrum::from_values(values)?,
        zero_bins,
    })
}

/// Smallest attainable `‖Y − C X‖²_F` over circulants `C`:
/// `Σ_k ‖ỹ_k‖² − |x̃_kᴴ ỹ_k|² / ‖x̃_k‖²`, empty bins contributing `‖ỹ_k‖²`.
pub fn cdla_min_error<T: Real>(yt: &Matrix<Complex<T>>, xt: &Matrix<Complex<T>>) -> Result<T> {
    check_pair(yt, xt)?;
    let (xy, xx, yy) = bin_sums(yt, xt);
    Ok((0..yt.rows())
        .map(|k| {
            if xx[k] > T::zero() {
                (yy[k] - xy[k].norm_sqr() / xx[k]).max(T::zero())
            } else {
                yy[k]
            }
        })
        .sum())
}

/// Generator of the circulant closest to `y` in Frobenius norm: the mean of
/// each wrapped diagonal.
pub fn nearest_circulant<T: Real>(y: &Matrix<T>) -> Result<Vec<T>> {
    let n = y.rows();
    if y.cols() != n {
        return Err(Error::dim(format!("{n}x{n}"), format!("{n}x{}", y.cols())));
    }
    let mut c = vec![T::zero(); n];
    for j in 0..n {
        for i in 0..n {
            c[(i + n - j) % n] += y[(i, j)];
        }
    }
    let inv = T::one() / T::from_usize_lossy(n.max(1));
    for v in &mut c {
        *v *= inv;
    }
    Ok(c)
}

/// Result of [`cdla_fit`].
#[derive(Clone, Debug)]
pub struct CdlaState<T> {
    /// Unit-norm generator `c`.
    pub generator: Vec<T>,
    pub spectrum: Spectrum<T>,
    pub code: SparseCode<T>,
    /// Objective after each coding step.
    pub objective_trace: Vec<f64>,
    pub report: FitReport,
}

/// Learns one circulant dictionary `C` and an `s`-sparse code for `Y`.
///
/// Column means of `Y` are removed first, so the DC eigenvalue is zero. The
/// generator starts at the dominant left singular vector of the centered data.
pub fn cdla_fit<T: Real>(y: &Matrix<T>, config: &FitConfig) -> Result<CdlaState<T>> {
    let init = initial_generators(y, 1, config.seed)?;
    cdla_fit_with_init(y, init.into_iter().next().expect("one generator"), config)
}

/// [`cdla_fit`] from a given initial generator.
pub fn cdla_fit_with_init<T: Real>(y: &Matrix<T>, init: Vec<T>, config: &FitConfig) -> Result<CdlaState<T>> {
    let fit = circulant_family_fit(y, vec![init], UpdateRule::Simultaneous, config)?;
    let generator = fit.dict.generator(0).to_vec();
    let spectrum = fit.dict.spectrum(0).clone();
    Ok(CdlaState {
        generator,
        spectrum,
        objective_trace: fit.report.objective_trace(),
        code: fit.code,
        report: fit.report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::fft_columns;

    #[test]
    fn proportional_rows_give_constant_spectrum() {
        let x = Matrix::from_fn(4, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let mut y = x.clone();
        y.scale(2.0);
        let xt = fft_columns(&x).unwrap();
        let yt = fft_columns(&y).unwrap();
        let up = cdla_spectrum_update(&yt, &xt).unwrap();
        for v in up.spectrum.values() {
            assert!((v - Complex::new(2.0, 0.0)).norm() < 1e-12);
        }
        assert!(cdla_min_error(&yt, &xt).unwrap() < 1e-20);
    }

    #[test]
    fn zero_code_keeps_all_energy() {
        let y = Matrix::from_fn(4, 2, |i, j| (i + 2 * j) as f64);
        let yt = fft_columns(&y).unwrap();
        let xt = Matrix::zeros(4, 2);
        let e = cdla_min_error(&yt, &xt).unwrap();
        assert!((e - y.frobenius_sq()).abs() < 1e-10);
        let up = cdla_spectrum_update(&yt, &xt).unwrap();
        assert_eq!(up.zero_bins, vec![0, 1, 2]);
    }

    #[test]
    fn nearest_circulant_examples() {
        let mut y = Matrix::<f64>::identity(3);
        y[(1, 0)] += 1.0;
        let c = nearest_circulant(&y).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-15);
        assert!((c[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!(c[2].abs() < 1e-15);
        let g = [0.3f64, -1.0, 2.0, 0.5];
        let c = nearest_circulant(&crate::spectral::dense_circulant(&g)).unwrap();
        for (a, b) in c.iter().zip(g) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
