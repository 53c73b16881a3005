#![allow(clippy::needless_range_loop)]

mod common;

use common::{eigen_inertia, rng};
use condensed_ipm::sparse::{analyse, cg_solve, dense_ldlt, numeric_factor, CscMatrix, DenseSymmetric, SparseError};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

fn random_symmetric(r: &mut rand_chacha::ChaCha8Rng, n: usize, density: f64) -> Vec<Vec<f64>> {
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            if i == j || r.random_bool(density) {
                let v = r.random_range(-2.0..2.0);
                a[i][j] = v;
                a[j][i] = v;
            }
        }
    }
    a
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn dense_ldlt_inertia_matches_eigenvalues(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.random_range(1..=50);
        let mut a = random_symmetric(&mut r, n, 0.3);
        // occasionally force exact singularity by repeating a row and column
        if n > 2 && r.random_bool(0.2) {
            let row = a[0].clone();
            a[1] = row.clone();
            for i in 0..n {
                a[i][1] = a[i][0];
            }
            a[1][1] = a[0][0];
        }
        let oracle = eigen_inertia(&DMatrix::from_fn(n, n, |i, j| a[i][j]));
        let inertia = dense_ldlt(&DenseSymmetric::from_rows(&a)).unwrap().inertia();
        prop_assert_eq!((inertia.positive, inertia.zero, inertia.negative), oracle);
    }

    #[test]
    fn cg_needs_at_most_one_iteration_per_distinct_eigenvalue(seed in any::<u64>(), k in 1usize..6) {
        let mut r = rng(seed);
        let n = r.random_range(k..=30);
        let levels: Vec<f64> = (0..k).map(|i| 1.0 + 3.0 * i as f64 + r.random_range(0.0..1.0)).collect();
        let eig = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(n, |i, _| levels[i % k]));
        let q = DMatrix::from_fn(n, n, |_, _| r.random_range(-1.0..1.0)).qr().q();
        let a = &q * eig * q.transpose();
        let b: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let out = cg_solve(
            |v, out| {
                for i in 0..n {
                    out[i] = (0..n).map(|j| a[(i, j)] * v[j]).sum();
                }
            },
            &b,
            1e-12,
            2 * k,
        )
        .unwrap();
        prop_assert!(out.iterations <= 2 * k);
    }

    #[test]
    fn cholesky_factors_have_positive_pivots(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.random_range(1..=40);
        let a = random_symmetric(&mut r, n, 0.2);
        let shift = r.random_range(-2.0..6.0);
        let mut t = vec![];
        for i in 0..n {
            for j in 0..=i {
                let v = if i == j { a[i][j] + shift } else { a[i][j] };
                if v != 0.0 || i == j {
                    t.push((i, j, v));
                }
            }
        }
        let m = CscMatrix::from_triplets(n, n, &t, true).unwrap();
        let sym = analyse(&m).unwrap();
        let spd = eigen_inertia(&DMatrix::from_fn(n, n, |i, j| a[i][j] + if i == j { shift } else { 0.0 })).0 == n;
        match numeric_factor(&sym, &m) {
            Ok(f) => {
                prop_assert!(f.d().iter().all(|&d| d > 0.0));
                prop_assert!(spd);
            }
            Err(SparseError::NotPositiveDefinite { .. }) => prop_assert!(!spd),
            Err(e) => prop_assert!(false, "{e}"),
        }
    }
}
