mod common;

use common::*;
use proptest::prelude::*;
use sidl::matrix::Matrix;
use sidl::spectral::{
    circulant_apply, embed_conv, fft_columns, ifft_columns, shift_vector, CirculantOperator, Fourier,
    Spectrum,
};

#[test]
fn fft_matches_naive_dft() {
    let mut r = rng(1);
    for n in [1, 2, 3, 5, 8, 20, 31, 64] {
        let m = random_matrix(n, 3, &mut r);
        let fast = fft_columns(&m).unwrap();
        let slow = naive_dft_columns(&m);
        for (a, b) in fast.as_slice().iter().zip(slow.as_slice()) {
            assert!((a - b).norm() < 1e-10, "n = {n}");
        }
    }
}

#[test]
fn circulant_apply_matches_definition() {
    let mut r = rng(2);
    let c = random_vec(8, &mut r);
    let m = random_matrix(8, 3, &mut r);
    let op = CirculantOperator::new(c.clone()).unwrap();
    let got = circulant_apply(&op, &m).unwrap();
    let want = circ(&c) * to_na(&m);
    assert!(max_abs(got.as_slice(), want.as_slice()) < 1e-10);
}

#[test]
fn spectrum_is_scaled_transform_of_generator() {
    let mut r = rng(3);
    let c = random_vec(20, &mut r);
    let s = Spectrum::from_generator(&c).unwrap();
    let f = naive_dft(&c.iter().map(|&v| C::new(v, 0.0)).collect::<Vec<_>>());
    for (a, b) in s.values().iter().zip(&f) {
        assert!((a - b * 20f64.sqrt()).norm() < 1e-10);
    }
    assert!(s.is_conjugate_symmetric(1e-12));
    assert!(max_abs(&s.generator().unwrap(), &c) < 1e-12);
}

/// Direct sum `y_t = Σ_i c_i x_{t−i}`.
fn convolve(c: &[f64], x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; c.len() + x.len() - 1];
    for (i, &a) in c.iter().enumerate() {
        for (j, &b) in x.iter().enumerate() {
            y[i + j] += a * b;
        }
    }
    y
}

fn apply_embedded(c: &[f64], x: &[f64]) -> Vec<f64> {
    let op = embed_conv(c, x.len()).unwrap();
    let mut padded = x.to_vec();
    padded.resize(c.len() + x.len() - 1, 0.0);
    op.apply(&Matrix::from_columns(padded.len(), &[padded]).unwrap())
        .unwrap()
        .into_vec()
}

#[test]
fn embed_conv_examples_match_direct_convolution() {
    let y = apply_embedded(&[1.0, 1.0], &[1.0, 2.0]);
    assert!(max_abs(&y, &[1.0, 3.0, 2.0]) < 1e-12);
    assert!(max_abs(&y, &convolve(&[1.0, 1.0], &[1.0, 2.0])) < 1e-12);
    let y = apply_embedded(&[1.0, -1.0], &[1.0, 1.0, 1.0]);
    assert!(max_abs(&y, &[1.0, 0.0, 0.0, -1.0]) < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn round_trip_and_parseval(seed in any::<u64>(), n in 2usize..=64) {
        let mut r = rng(seed);
        let m = random_matrix(n, 2, &mut r);
        let f = fft_columns(&m).unwrap();
        let back = ifft_columns(&f).unwrap();
        for (a, b) in back.as_slice().iter().zip(m.as_slice()) {
            prop_assert!((a.re - b).abs() < 1e-12 && a.im.abs() < 1e-12);
        }
        for j in 0..2 {
            let e_x: f64 = m.col(j).iter().map(|v| v * v).sum();
            let e_f: f64 = f.col(j).iter().map(|v| v.norm_sqr()).sum();
            prop_assert!((e_x.sqrt() - e_f.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn spectra_of_real_generators_are_symmetric(seed in any::<u64>(), n in 1usize..=64) {
        let c = random_vec(n, &mut rng(seed));
        let s = Spectrum::from_generator(&c).unwrap();
        prop_assert!(s.is_conjugate_symmetric(1e-10));
        let (g, residue) = s.generator_with_residue().unwrap();
        prop_assert!(residue < 1e-10);
        prop_assert!(max_abs(&g, &c) < 1e-12);
        let f = Fourier::new(n).unwrap().forward_real(&c);
        let fn_: f64 = f.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        prop_assert!((fn_ - norm(&c)).abs() < 1e-12);
    }

    #[test]
    fn circulant_apply_agrees_with_dense(seed in any::<u64>(), n in 1usize..=32, cols in 1usize..4) {
        let mut r = rng(seed);
        let c = random_vec(n, &mut r);
        let m = random_matrix(n, cols, &mut r);
        let got = CirculantOperator::new(c.clone()).unwrap().apply(&m).unwrap();
        let want = circ(&c) * to_na(&m);
        prop_assert!(max_abs(got.as_slice(), want.as_slice()) < 1e-10);
    }

    #[test]
    fn basis_vectors_pick_out_shifts(seed in any::<u64>(), n in 1usize..=24, q in 0usize..24) {
        let q = q % n;
        let c = random_vec(n, &mut rng(seed));
        let mut e = vec![0.0; n];
        e[q] = 1.0;
        let out = CirculantOperator::new(c.clone()).unwrap()
            .apply(&Matrix::from_columns(n, &[e]).unwrap()).unwrap();
        prop_assert!(max_abs(out.as_slice(), &shift_vector(&c, q as i64)) < 1e-12);
    }

    #[test]
    fn shifts_compose(seed in any::<u64>(), n in 1usize..=16, a in -40i64..40, b in -40i64..40) {
        let x = random_vec(n, &mut rng(seed));
        let twice = shift_vector(&shift_vector(&x, a), b);
        prop_assert_eq!(twice, shift_vector(&x, a + b));
        prop_assert_eq!(shift_vector(&x, n as i64), x);
    }

    #[test]
    fn embedding_is_linear_convolution(seed in any::<u64>(), n in 1usize..=8, extra in 0usize..8) {
        let mut r = rng(seed);
        let c = random_vec(n, &mut r);
        let x = random_vec(n + extra, &mut r);
        prop_assert!(max_abs(&apply_embedded(&c, &x), &convolve(&c, &x)) < 1e-12);
    }
}
