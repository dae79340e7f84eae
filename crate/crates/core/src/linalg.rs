//! Small dense kernels: real and Hermitian Cholesky, symmetric eigenproblems.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::{abs, Real};

/// In-place lower Cholesky factorization. The strict upper triangle is left untouched.
pub(crate) fn cholesky_in_place<T: Real>(a: &mut Matrix<T>) -> Result<()> {
    let n = a.rows();
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= a[(j, k)] * a[(j, k)];
        }
        if !(d > T::zero()) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite {
                pivot: j,
                value: d.as_f64(),
            });
        }
        let d = d.sqrt();
        a[(j, j)] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= a[(i, k)] * a[(j, k)];
            }
            a[(i, j)] = s / d;
        }
    }
    Ok(())
}

/// Solves `L Lᵀ x = b` given the factor from [`cholesky_in_place`].
pub(crate) fn cholesky_solve<T: Real>(l: &Matrix<T>, b: &[T]) -> Vec<T> {
    let n = l.rows();
    let mut x = b.to_vec();
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l[(i, k)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Solves the Hermitian positive definite system `G a = b`, `G` given row-major.
pub(crate) fn hermitian_solve<T: Real>(g: &[Complex<T>], b: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
    let n = b.len();
    debug_assert_eq!(g.len(), n * n);
    let mut l = vec![Complex::new(T::zero(), T::zero()); n * n];
    for j in 0..n {
        let mut d = g[j * n + j].re;
        for k in 0..j {
            d -= l[j * n + k].norm_sqr();
        }
        if !(d > T::zero()) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite {
                pivot: j,
                value: d.as_f64(),
            });
        }
        let d = d.sqrt();
        l[j * n + j] = Complex::new(d, T::zero());
        for i in j + 1..n {
            let mut s = g[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k].conj();
            }
            l[i * n + j] = s / d;
        }
    }
    let mut x = b.to_vec();
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l[i * n + k] * x[k];
        }
        x[i] = s / l[i * n + i].re;
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= l[k * n + i].conj() * x[k];
        }
        x[i] = s / l[i * n + i].re;
    }
    Ok(x)
}

/// Cyclic Jacobi eigensolver for a symmetric matrix.
///
/// Returns eigenvalues in descending order and the matching unit eigenvectors
/// as matrix columns.
pub(crate) fn symmetric_eigen<T: Real>(a: &Matrix<T>) -> (Vec<T>, Matrix<T>) {
    let n = a.rows();
    let mut a = a.clone();
    let mut v = Matrix::<T>::identity(n);
    let scale = a.frobenius_sq().sqrt();
    let tol = T::epsilon() * scale;
    for _sweep in 0..100 {
        let mut off = T::zero();
        for j in 0..n {
            for i in 0..j {
                off += a[(i, j)] * a[(i, j)];
            }
        }
        if off.sqrt() <= tol || scale == T::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if abs(apq) <= T::min_positive_value() {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (apq + apq);
                let t = theta.signum() / (abs(theta) + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[(j, j)]
            .partial_cmp(&a[(i, i)])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = Matrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    (values, vectors)
}

/// Left singular vectors of `y` with their singular values, descending.
///
/// Computed from the eigendecomposition of `y yᵀ`, which is small for the
/// `n × N` (N ≫ n) datasets handled here.
pub(crate) fn left_singular_vectors<T: Real>(y: &Matrix<T>) -> (Vec<T>, Matrix<T>) {
    let n = y.rows();
    let mut gram = Matrix::<T>::zeros(n, n);
    for col in y.columns() {
        for j in 0..n {
            let cj = col[j];
            if cj == T::zero() {
                continue;
            }
            for i in 0..n {
                gram[(i, j)] += col[i] * cj;
            }
        }
    }
    let (values, vectors) = symmetric_eigen(&gram);
    let singular = values.into_iter().map(|v| v.max(T::zero()).sqrt()).collect();
    let mut vectors = vectors;
    // fix the sign so that the largest-magnitude entry is positive
    for j in 0..n {
        let col = vectors.col_mut(j);
        let mut best = T::zero();
        for &x in col.iter() {
            if abs(x) > abs(best) {
                best = x;
            }
        }
        if best < T::zero() {
            for x in col.iter_mut() {
                *x = -*x;
            }
        }
    }
    (singular, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_solves_spd_system() {
        let mut a = Matrix::from_col_major(2, 2, vec![4.0, 2.0, 2.0, 3.0]).unwrap();
        cholesky_in_place(&mut a).unwrap();
        let x = cholesky_solve(&a, &[2.0, 1.0]);
        assert!((4.0 * x[0] + 2.0 * x[1] - 2.0f64).abs() < 1e-14);
        assert!((2.0 * x[0] + 3.0 * x[1] - 1.0f64).abs() < 1e-14);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut a = Matrix::from_col_major(2, 2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(matches!(
            cholesky_in_place(&mut a),
            Err(Error::NotPositiveDefinite { pivot: 1, .. })
        ));
    }

    #[test]
    fn hermitian_solve_2x2() {
        let c = |re, im| Complex::new(re, im);
        let g = [c(2.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(2.0, 0.0)];
        let b = [c(1.0, 0.0), c(0.0, 0.0)];
        let x = hermitian_solve(&g, &b).unwrap();
        let r0 = g[0] * x[0] + g[1] * x[1] - b[0];
        let r1 = g[2] * x[0] + g[3] * x[1] - b[1];
        assert!(r0.norm() < 1e-14 && r1.norm() < 1e-14);
    }

    #[test]
    fn jacobi_diagonalizes() {
        let a = Matrix::from_col_major(3, 3, vec![2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0]).unwrap();
        let (vals, vecs) = symmetric_eigen(&a);
        let expect = [2.0 + 2f64.sqrt(), 2.0, 2.0 - 2f64.sqrt()];
        for (v, e) in vals.iter().zip(expect) {
            assert!((v - e).abs() < 1e-12);
        }
        let av = a.matmul(&vecs).unwrap();
        for j in 0..3 {
            for i in 0..3 {
                assert!((av[(i, j)] - vals[j] * vecs[(i, j)]).abs() < 1e-12);
            }
        }
    }
}
