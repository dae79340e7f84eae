//! Representation error, kernel recovery and atom utilization.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::{dot, norm, Matrix};
use crate::scalar::{abs, Real};
use crate::sparse::SparseCode;
use crate::spectral::shift_vector;

/// `100·‖Y − R‖²_F / ‖Y‖²_F` for a reconstruction `R`.
pub fn epsilon_of<T: Real>(y: &Matrix<T>, reconstruction: &Matrix<T>) -> Result<T> {
    let energy = y.frobenius_sq();
    if energy == T::zero() {
        return Err(Error::ZeroDataset);
    }
    Ok(T::lit(100.0) * y.sub(reconstruction)?.frobenius_sq() / energy)
}

/// Relative representation error `100·‖Y − DX‖²_F / ‖Y‖²_F`, in percent.
pub fn metric_epsilon<T: Real>(y: &Matrix<T>, d: &Matrix<T>, x: &SparseCode<T>) -> Result<T> {
    if d.rows() != y.rows() || x.n_cols() != y.cols() {
        return Err(Error::dim(
            format!("{}x{}", y.rows(), y.cols()),
            format!("{}x{}", d.rows(), x.n_cols()),
        ));
    }
    epsilon_of(y, &x.synthesize(d)?)
}

/// Largest `|⟨P^q a, b⟩| / (‖a‖‖b‖)` over all cyclic shifts `q`.
pub fn shift_correlation<T: Real>(a: &[T], b: &[T]) -> T {
    let den = norm(a) * norm(b);
    if den == T::zero() {
        return T::zero();
    }
    (0..a.len())
        .map(|q| abs(dot(&shift_vector(a, q as i64), b)))
        .fold(T::zero(), T::max)
        / den
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Recovery {
    /// Fraction of true kernels matched at or above the threshold.
    pub rate: f64,
    /// Correlation of each true kernel with its matched learned generator
    /// (zero when unmatched).
    pub correlations: Vec<f64>,
}

/// Matches learned generators to true kernels one-to-one, highest
/// shift-invariant correlation first, and counts matches `≥ threshold`.
pub fn metric_recovery<T: Real>(learned: &[Vec<T>], truth: &[Vec<T>], threshold: f64) -> Recovery {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(learned.len() * truth.len());
    for (t, tk) in truth.iter().enumerate() {
        for (l, lk) in learned.iter().enumerate() {
            if lk.len() == tk.len() {
                pairs.push((shift_correlation(lk, tk).as_f64(), t, l));
            }
        }
    }
    pairs.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut truth_done = vec![false; truth.len()];
    let mut learned_done = vec![false; learned.len()];
    let mut correlations = vec![0.0; truth.len()];
    for (c, t, l) in pairs {
        if !truth_done[t] && !learned_done[l] {
            truth_done[t] = true;
            learned_done[l] = true;
            correlations[t] = c;
        }
    }
    let hits = correlations.iter().filter(|&&c| c >= threshold).count();
    Recovery {
        rate: if truth.is_empty() {
            0.0
        } else {
            hits as f64 / truth.len() as f64
        },
        correlations,
    }
}

/// Number of code entries using each of the `nL` atoms.
pub fn metric_utilization<T: Real>(x: &SparseCode<T>, blocks: usize, n: usize) -> Result<Vec<usize>> {
    if x.n_rows() != blocks * n {
        return Err(Error::dim(blocks * n, x.n_rows()));
    }
    Ok(x.row_counts())
}

/// For every block with at least one use, the share of its uses that fall on
/// its `q` most used atoms.
pub fn peak_concentration(hist: &[usize], n: usize, q: usize) -> Vec<f64> {
    hist.chunks(n)
        .filter_map(|block| {
            let total: usize = block.iter().sum();
            if total == 0 {
                return None;
            }
            let mut sorted = block.to_vec();
            sorted.sort_unstable_by(|a, b| b.cmp(a));
            Some(sorted.iter().take(q).sum::<usize>() as f64 / total as f64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epsilon_extremes() {
        let y = Matrix::from_fn(3, 2, |i, j| (i + j) as f64 + 1.0);
        assert_eq!(epsilon_of(&y, &y).unwrap(), 0.0);
        assert!((epsilon_of(&y, &Matrix::zeros(3, 2)).unwrap() - 100.0).abs() < 1e-12);
        assert!(matches!(
            epsilon_of(&Matrix::<f64>::zeros(2, 2), &Matrix::zeros(2, 2)),
            Err(Error::ZeroDataset)
        ));
    }

    #[test]
    fn recovery_is_shift_and_sign_invariant() {
        let truth = vec![vec![1.0f64, -2.0, 0.5, 0.0], vec![0.0, 1.0, 1.0, -2.0]];
        let learned: Vec<Vec<f64>> = truth
            .iter()
            .rev()
            .map(|k| shift_vector(k, 3).iter().map(|v| -v).collect())
            .collect();
        let r = metric_recovery(&learned, &truth, 0.99);
        assert_eq!(r.rate, 1.0);
    }

    #[test]
    fn utilization_counts_rows() {
        let x = SparseCode::from_columns(4, 1, vec![vec![(0, 1.0f64)]; 5]).unwrap();
        assert_eq!(metric_utilization(&x, 2, 2).unwrap(), vec![5, 0, 0, 0]);
        assert_eq!(peak_concentration(&[5, 0, 3, 1], 2, 1), vec![1.0, 0.75]);
    }
}
