mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use sidl::solvers::{
    block_gram_solve, cg_solve, levinson_solve, solve_gram, toeplitz_col_from_weights, BlockToeplitzGram,
    SolverConfig, SolverKind, SymToeplitz, ToeplitzBlock,
};
use sidl::spectral::Fourier;
use sidl::Error;

/// Dense unitary Fourier matrix.
fn fourier(p: usize) -> DMatrix<C> {
    let s = 1.0 / (p as f64).sqrt();
    DMatrix::from_fn(p, p, |k, j| {
        C::from_polar(s, -2.0 * std::f64::consts::PI * (j * k) as f64 / p as f64)
    })
}

/// `F[:, :n]ᴴ diag(w) F[:, :n]`, real part.
fn dense_weighted(w: &[f64], n: usize) -> DMatrix<f64> {
    let f = fourier(w.len()).columns(0, n).into_owned();
    let wd = DMatrix::from_diagonal(&DVector::from_iterator(
        w.len(),
        w.iter().map(|&v| C::new(v, 0.0)),
    ));
    (f.adjoint() * wd * f).map(|z| z.re)
}

fn dense_solve(a: &DMatrix<f64>, b: &[f64]) -> Vec<f64> {
    a.clone()
        .cholesky()
        .unwrap()
        .solve(&DVector::from_column_slice(b))
        .as_slice()
        .to_vec()
}

/// Symmetric positive definite Toeplitz column: autocorrelation of a random
/// sequence plus a diagonal shift.
fn spd_toeplitz_column(n: usize, r: &mut rand_chacha::ChaCha8Rng) -> Vec<f64> {
    let a = random_vec(n + 4, r);
    let mut t: Vec<f64> = (0..n)
        .map(|k| (0..a.len() - k).map(|i| a[i] * a[i + k]).sum())
        .collect();
    t[0] += 0.1;
    t
}

#[test]
fn tridiagonal_levinson_matches_cholesky() {
    let mut t = vec![0.0; 8];
    t[0] = 2.0;
    t[1] = 1.0;
    let b = random_vec(8, &mut rng(1));
    let x = levinson_solve(&SymToeplitz::new(t.clone()).unwrap(), &b).unwrap();
    let dense = DMatrix::from_fn(8, 8, |i, j| t[i.abs_diff(j)]);
    assert!(max_abs(&x, &dense_solve(&dense, &b)) < 1e-10);
}

#[test]
fn weights_column_matches_dense_fourier_product() {
    let mut r = rng(2);
    for &(p, n) in &[(4, 2), (8, 3), (16, 16), (20, 7)] {
        // weights of a real signal: symmetric by construction
        let x = random_vec(p, &mut r);
        let w: Vec<f64> = Fourier::new(p)
            .unwrap()
            .forward_real(&x)
            .iter()
            .map(|z| z.norm_sqr())
            .collect();
        let col = toeplitz_col_from_weights(&w, n).unwrap();
        let dense = dense_weighted(&w, n);
        let want: Vec<f64> = (0..n).map(|i| dense[(i, 0)] * (p as f64).sqrt()).collect();
        assert!(max_abs(&col, &want) < 1e-10, "p = {p}, n = {n}");
    }
    assert!(max_abs(&toeplitz_col_from_weights(&[1.0; 4], 2).unwrap(), &[2.0, 0.0]) < 1e-12);
    let col = toeplitz_col_from_weights(&[4.0, 0.0, 0.0, 0.0], 3).unwrap();
    assert!(max_abs(&col, &[2.0, 2.0, 2.0]) < 1e-12);
    assert!(matches!(
        toeplitz_col_from_weights(&[1.0; 4], 5),
        Err(Error::Size(_))
    ));
}

#[test]
fn levinson_on_sparse_code_weights_matches_dense_solve() {
    let mut r = rng(3);
    let (p, n, cols) = (16, 5, 40);
    let x = random_code(p, cols, 3, &mut r);
    let xt = Fourier::new(p).unwrap().columns(&x).unwrap();
    let w: Vec<f64> = (0..p)
        .map(|k| (0..cols).map(|j| xt[(k, j)].norm_sqr()).sum())
        .collect();
    let col = toeplitz_col_from_weights(&w, n).unwrap();
    let scale = 1.0 / (p as f64).sqrt();
    let t = SymToeplitz::new(col.iter().map(|v| v * scale).collect()).unwrap();
    let dense = dense_weighted(&w, n);
    assert!(max_abs(t.to_dense().as_slice(), dense.as_slice()) < 1e-10);
    let b = random_vec(n, &mut r);
    assert!(max_abs(&levinson_solve(&t, &b).unwrap(), &dense_solve(&dense, &b)) < 1e-8);
}

fn random_block_gram(l: usize, n: usize, r: &mut rand_chacha::ChaCha8Rng) -> BlockToeplitzGram<f64> {
    // Gram of a random design whose columns are shifts: B = [P^i x_ℓ], p = 3n
    let p = 3 * n;
    let xs: Vec<Vec<f64>> = (0..l).map(|_| random_vec(p, r)).collect();
    let t = |a: &[f64], b: &[f64]| -> Vec<f64> {
        (0..p)
            .map(|d| (0..p).map(|i| a[(i + d) % p] * b[i]).sum())
            .collect()
    };
    let diagonal = xs
        .iter()
        .map(|x| {
            let mut c = t(x, x)[..n].to_vec();
            c[0] += 0.5;
            SymToeplitz::new(c).unwrap()
        })
        .collect();
    let mut upper = Vec::new();
    for a in 0..l {
        for b in a + 1..l {
            upper.push(ToeplitzBlock::from_cyclic_sequence(&t(&xs[a], &xs[b]), n));
        }
    }
    BlockToeplitzGram::new(diagonal, upper).unwrap()
}

#[test]
fn block_solve_matches_dense_and_cg() {
    let mut r = rng(4);
    let g = random_block_gram(2, 3, &mut r);
    let dense = to_na(&g.to_dense());
    assert!((dense.clone() - dense.transpose()).amax() < 1e-12);
    let v = random_vec(6, &mut r);
    let direct = block_gram_solve(&g, &v).unwrap();
    assert!(max_abs(&direct, &dense_solve(&dense, &v)) < 1e-9);
    let cg = cg_solve(|x| g.apply(x), &v, 1e-12, 200).unwrap();
    assert!(cg.converged);
    assert!(max_abs(&cg.solution, &direct) < 1e-6 * norm(&direct).max(1.0));
}

#[test]
fn single_block_routes_agree() {
    let mut r = rng(5);
    let col = spd_toeplitz_column(7, &mut r);
    let g = BlockToeplitzGram::new(vec![SymToeplitz::new(col.clone()).unwrap()], vec![]).unwrap();
    let v = random_vec(7, &mut r);
    let lev = levinson_solve(g.diagonal_block(0), &v).unwrap();
    let chol = block_gram_solve(&g, &v).unwrap();
    assert!(max_abs(&lev, &chol) < 1e-10);
    let routed = solve_gram(&g, &v, &SolverConfig::default()).unwrap();
    assert_eq!(routed.solver, SolverKind::Levinson);
    let cfg = SolverConfig {
        cholesky_max_dim: 0,
        ..SolverConfig::default()
    };
    let g2 = random_block_gram(2, 4, &mut r);
    let v2 = random_vec(8, &mut r);
    let viacg = solve_gram(&g2, &v2, &cfg).unwrap();
    assert_eq!(viacg.solver, SolverKind::ConjugateGradient);
    assert!(max_abs(&viacg.solution, &block_gram_solve(&g2, &v2).unwrap()) < 1e-6);
}

#[test]
fn cg_handles_condition_number_up_to_a_million() {
    let n = 30;
    let eig: Vec<f64> = (0..n)
        .map(|i| 10f64.powf(6.0 * i as f64 / (n - 1) as f64))
        .collect();
    let q = DMatrix::from_fn(n, n, |i, j| rng((i * n + j) as u64).random_range(-1.0..1.0))
        .qr()
        .q();
    let a = &q * DMatrix::from_diagonal(&DVector::from_vec(eig)) * q.transpose();
    let v = random_vec(n, &mut rng(6));
    let out = cg_solve(
        |x| (&a * DVector::from_column_slice(x)).as_slice().to_vec(),
        &v,
        1e-10,
        20 * n,
    )
    .unwrap();
    assert!(out.converged);
    let want = dense_solve(&a, &v);
    assert!(max_abs(&out.solution, &want) < 1e-3 * norm(&want));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn levinson_agrees_with_dense(seed in any::<u64>(), n in 1usize..=32) {
        let mut r = rng(seed);
        let col = spd_toeplitz_column(n, &mut r);
        let b = random_vec(n, &mut r);
        let t = SymToeplitz::new(col.clone()).unwrap();
        let x = levinson_solve(&t, &b).unwrap();
        let dense = DMatrix::from_fn(n, n, |i, j| col[i.abs_diff(j)]);
        let want = dense_solve(&dense, &b);
        prop_assert!(max_abs(&x, &want) <= 1e-8 * norm(&want).max(1.0));
        let res: Vec<f64> = t.apply(&x).iter().zip(&b).map(|(a, b)| a - b).collect();
        prop_assert!(norm(&res) <= 1e-8 * norm(&b));
    }

    #[test]
    fn block_solve_residual_is_small(seed in any::<u64>(), l in 1usize..=4, n in 1usize..=16) {
        prop_assume!(n * l <= 64);
        let mut r = rng(seed);
        let g = random_block_gram(l, n, &mut r);
        let v = random_vec(n * l, &mut r);
        let c = block_gram_solve(&g, &v).unwrap();
        let res: Vec<f64> = g.apply(&c).iter().zip(&v).map(|(a, b)| a - b).collect();
        prop_assert!(norm(&res) <= 1e-8 * norm(&v));
    }

    #[test]
    fn parameter_count_identity(l in 1usize..=6, n in 1usize..=12) {
        let g = random_block_gram(l, n, &mut rng(0));
        prop_assert_eq!(g.parameter_count(), n * l + (2 * n - 1) * l * (l - 1) / 2);
        let dense = g.to_dense();
        for a in 0..l {
            for b in 0..l {
                for i in 0..n {
                    for j in 0..n {
                        prop_assert_eq!(dense[(a * n + i, b * n + j)], dense[(b * n + j, a * n + i)]);
                    }
                }
            }
        }
    }
}
