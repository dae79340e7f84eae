use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sidl::circulant::cdla_spectrum_update;
use sidl::learn::FitConfig;
use sidl::matrix::Matrix;
use sidl::metrics::metric_epsilon;
use sidl::sparse::omp_batch;
use sidl::spectral::{shift_vector, Fourier};
use sidl::uconv::{
    assemble_gram, assemble_gram_counted, assemble_rhs, single_conv_update, uconv_fit, uconv_fit_with_init,
    UnionConvDict,
};

type C = Complex<f64>;

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn transform(m: &Matrix<f64>) -> Matrix<C> {
    Fourier::new(m.rows()).unwrap().columns(m).unwrap()
}

/// Column `(ℓ, i)` of `B` is `vec(Pⁱ X⁽ℓ⁾)`, the data-space image of a unit
/// kernel entry at offset `i`.
fn dense_design(xs: &[Matrix<f64>], n: usize) -> DMatrix<f64> {
    let (p, cols) = xs[0].shape();
    let mut b = DMatrix::zeros(p * cols, n * xs.len());
    for (l, x) in xs.iter().enumerate() {
        for i in 0..n {
            for j in 0..cols {
                let shifted = shift_vector(x.col(j), i as i64);
                for r in 0..p {
                    b[(j * p + r, l * n + i)] = shifted[r];
                }
            }
        }
    }
    b
}

fn vec_of(m: &Matrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

#[test]
fn gram_and_rhs_match_dense_assembly() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for &(p, n, l, cols) in &[(8, 3, 2, 4), (16, 5, 3, 6), (9, 4, 1, 5), (12, 12, 2, 3)] {
        let y = random_matrix(p, cols, &mut rng);
        let xs: Vec<Matrix<f64>> = (0..l).map(|_| random_matrix(p, cols, &mut rng)).collect();
        let xts: Vec<Matrix<C>> = xs.iter().map(transform).collect();
        let refs: Vec<&Matrix<C>> = xts.iter().collect();
        let b = dense_design(&xs, n);
        let gram = assemble_gram(&refs, n).unwrap().to_dense();
        let want = b.transpose() * &b;
        for r in 0..n * l {
            for c in 0..n * l {
                assert!((gram[(r, c)] - want[(r, c)]).abs() < 1e-9, "gram ({r},{c}) p={p}");
            }
        }
        let rhs = assemble_rhs(&transform(&y), &refs, n).unwrap();
        let want = b.transpose() * vec_of(&y);
        for (a, e) in rhs.iter().zip(want.iter()) {
            assert!((a - e).abs() < 1e-9);
        }
    }
}

#[test]
fn autocorrelation_rhs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let y = random_matrix(10, 3, &mut rng);
    let yt = transform(&y);
    let v = assemble_rhs(&yt, &[&yt], 4).unwrap();
    for (d, &vd) in v.iter().enumerate() {
        let direct: f64 = y
            .columns()
            .map(|c| {
                let s = shift_vector(c, d as i64);
                s.iter().zip(c).map(|(a, b)| a * b).sum::<f64>()
            })
            .sum();
        assert!((vd - direct).abs() < 1e-10);
    }
}

#[test]
fn white_code_gives_scaled_identity() {
    // X = I: every bin carries the same weight
    let p = 8;
    let x = Matrix::<f64>::identity(p);
    let xt = transform(&x);
    let g = assemble_gram(&[&xt], 3).unwrap().to_dense();
    for r in 0..3 {
        for c in 0..3 {
            let e = if r == c { p as f64 } else { 0.0 };
            assert!((g[(r, c)] - e).abs() < 1e-12);
        }
    }
}

#[test]
fn operation_count_is_bounded_by_pl2n() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for &(p, l, cols) in &[(16, 1, 10), (32, 3, 20), (64, 4, 50)] {
        let xts: Vec<Matrix<C>> = (0..l)
            .map(|_| transform(&random_matrix(p, cols, &mut rng)))
            .collect();
        let refs: Vec<&Matrix<C>> = xts.iter().collect();
        let (_, count) = assemble_gram_counted(&refs, 4).unwrap();
        assert!(count <= p * l * l * cols, "count {count}");
    }
}

#[test]
fn single_kernel_matches_dense_least_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for &(p, n) in &[(16, 5), (11, 3), (20, 1)] {
        let y = random_matrix(p, 7, &mut rng);
        let x = random_matrix(p, 7, &mut rng);
        let up = single_conv_update(&transform(&y), &transform(&x), n, 0).unwrap();
        let b = dense_design(std::slice::from_ref(&x), n);
        let want = (b.transpose() * &b)
            .cholesky()
            .unwrap()
            .solve(&(b.transpose() * vec_of(&y)));
        for (a, e) in up.kernel.iter().zip(want.iter()) {
            assert!((a - e).abs() < 1e-8);
        }
        assert!(!up.random);
    }
}

#[test]
fn full_support_matches_closed_form_circulant() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let p = 12;
    let y = random_matrix(p, 20, &mut rng);
    let x = random_matrix(p, 20, &mut rng);
    let (yt, xt) = (transform(&y), transform(&x));
    let up = single_conv_update(&yt, &xt, p, 0).unwrap();
    let c = cdla_spectrum_update(&yt, &xt)
        .unwrap()
        .spectrum
        .generator()
        .unwrap();
    for (a, e) in up.kernel.iter().zip(&c) {
        assert!((a - e).abs() < 1e-8);
    }
}

#[test]
fn zero_code_returns_seeded_unit_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let yt = transform(&random_matrix(8, 4, &mut rng));
    let xt = Matrix::<C>::zeros(8, 4);
    let a = single_conv_update(&yt, &xt, 3, 42).unwrap();
    let b = single_conv_update(&yt, &xt, 3, 42).unwrap();
    assert!(a.random);
    assert_eq!(a.kernel, b.kernel);
    let norm: f64 = a.kernel.iter().map(|v| v * v).sum();
    assert!((norm - 1.0).abs() < 1e-12);
}

#[test]
fn single_block_fit_agrees_with_levinson_path() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (p, n) = (24, 5);
    let y = random_matrix(p, 40, &mut rng);
    let mut init = vec![0.0; n];
    init[0] = 1.0;
    let dict = UnionConvDict::new(vec![init], p).unwrap();
    let fit = uconv_fit_with_init(&y, dict.clone(), &FitConfig::new(2, 1)).unwrap();
    // redo the first dictionary step by hand
    let (yc, _) = sidl::data::remove_dc(&y);
    let code = omp_batch(&dict.to_dense(), &yc, 2, None).unwrap();
    let mut yt = transform(&yc);
    for col in yt.columns_mut() {
        col[0] = C::new(0.0, 0.0);
    }
    let xt = transform(&code.to_dense());
    let mut k = single_conv_update(&yt, &xt, n, 0).unwrap().kernel;
    let norm = k.iter().map(|v| v * v).sum::<f64>().sqrt();
    k.iter_mut().for_each(|v| *v /= norm);
    let mut learned = fit.dict.kernel(0).to_vec();
    if learned.iter().zip(&k).map(|(a, b)| a * b).sum::<f64>() < 0.0 {
        learned.iter_mut().for_each(|v| *v = -*v);
    }
    for (a, e) in learned.iter().zip(&k) {
        assert!((a - e).abs() < 1e-8);
    }
}

#[test]
fn supports_stay_compact_and_steps_descend() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let y = random_matrix(20, 60, &mut rng);
    let fit = uconv_fit(&y, 2, 4, &FitConfig::new(3, 15).with_seed(1)).unwrap();
    for g in fit.dict.generators() {
        assert!(g[4..].iter().all(|&v| v == 0.0));
        let norm: f64 = g.iter().map(|v| v * v).sum();
        assert!((norm - 1.0).abs() < 1e-10);
    }
    for r in &fit.report.records {
        assert!(r.after_update <= r.before_update * (1.0 + 1e-10) + 1e-12);
    }
}

#[test]
fn general_support_matches_dense_least_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let p = 10;
    let support = vec![0, 2, 5];
    let y = random_matrix(p, 30, &mut rng);
    let dict = UnionConvDict::with_support(
        vec![vec![1.0, 0.5, -0.3], vec![0.2, 1.0, 0.1]],
        support.clone(),
        p,
    )
    .unwrap();
    let fit = uconv_fit_with_init(&y, dict, &FitConfig::new(2, 3).with_seed(2)).unwrap();
    for g in fit.dict.generators() {
        for (i, &v) in g.iter().enumerate() {
            if !support.contains(&i) {
                assert_eq!(v, 0.0);
            }
        }
    }
    for r in &fit.report.records {
        assert!(r.after_update <= r.before_update * (1.0 + 1e-10) + 1e-12);
    }
}

#[test]
fn self_consistent_data_is_fit_exactly() {
    // two zero-mean compact kernels, two atoms per column, no noise
    let (p, n, l, s, cols) = (32, 6, 2, 2, 1024);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let kernels: Vec<Vec<f64>> = (0..l)
        .map(|_| {
            let mut k: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mean = k.iter().sum::<f64>() / n as f64;
            k.iter_mut().for_each(|v| *v -= mean);
            let norm = k.iter().map(|v| v * v).sum::<f64>().sqrt();
            k.iter_mut().for_each(|v| *v /= norm);
            k
        })
        .collect();
    let truth = UnionConvDict::new(kernels, p).unwrap();
    let d = truth.to_dense();
    let mut y = Matrix::<f64>::zeros(p, cols);
    for j in 0..cols {
        for _ in 0..s {
            let atom = rng.random_range(0..p * l);
            let a = rng.random_range(1.0..3.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            for r in 0..p {
                y[(r, j)] += a * d[(r, atom)];
            }
        }
    }
    // keep the columns the generating dictionary codes exactly
    let coded = omp_batch(&d, &y, s, None).unwrap().synthesize(&d).unwrap();
    let keep: Vec<Vec<f64>> = (0..cols)
        .filter(|&j| {
            y.col(j)
                .iter()
                .zip(coded.col(j))
                .all(|(a, b)| (a - b).abs() < 1e-9)
        })
        .map(|j| y.col(j).to_vec())
        .collect();
    assert!(keep.len() > 950);
    let y = Matrix::from_columns(p, &keep).unwrap();

    let at_truth = uconv_fit_with_init(&y, truth, &FitConfig::new(s, 100)).unwrap();
    assert!(at_truth.report.final_epsilon().unwrap() < 1e-3);

    let best = (0..12)
        .map(|seed| {
            let fit = uconv_fit(&y, l, n, &FitConfig::new(s, 100).with_seed(seed)).unwrap();
            for r in &fit.report.records {
                assert!(r.after_update <= r.before_update * (1.0 + 1e-10) + 1e-12);
            }
            metric_epsilon(&y, &fit.dict.to_dense(), &fit.code).unwrap()
        })
        .fold(f64::INFINITY, f64::min);
    assert!(best < 1e-3, "best eps {best}");
}
