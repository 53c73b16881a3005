#![allow(clippy::needless_range_loop)]

mod common;

use std::sync::Arc;

use common::{eigen_inertia, random_kkt, rng, DenseKkt};
use condensed_ipm::distillation::{build_distillation, default_params};
use condensed_ipm::ipm::{solve, SolverOptions};
use condensed_ipm::kkt::{
    new_strategy, solve_condensed_dense, AugmentedStrategy, HyKktStrategy, KktError, KktStrategy, LiftedStrategy,
    Step, StrategyKind, StrategyOptions,
};
use condensed_ipm::sparse::{analyse, numeric_factor, CscMatrix, DEFAULT_DENSE_CAP};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn scale(s: &Step) -> f64 {
    [&s.dx, &s.ds, &s.dy, &s.dz].iter().flat_map(|v| v.iter()).fold(1.0_f64, |m, v| m.max(v.abs()))
}

fn dims(r: &mut ChaCha8Rng) -> (usize, usize, usize) {
    let n = r.random_range(2..=20);
    let me = r.random_range(0..=n / 2);
    let mi = r.random_range(0..=n);
    (n, me, mi)
}

fn options(gamma: f64) -> StrategyOptions {
    StrategyOptions { gamma, ..Default::default() }
}

fn strategy_step(kind: StrategyKind, sys: &DenseKkt, opts: &StrategyOptions) -> Result<Step, KktError> {
    let inputs = sys.inputs();
    let mut s = new_strategy(kind, &inputs.patterns(), opts)?;
    Ok(s.solve(&inputs)?.step)
}

/// Dense `γ G K_γ⁻¹ Gᵀ` for a system with positive definite `K`.
fn scaled_schur(sys: &DenseKkt, gamma: f64) -> DMatrix<f64> {
    let n = sys.n();
    let g = DMatrix::from_fn(sys.g.len(), n, |i, j| sys.g[i][j]);
    let k = sys.condensed() + gamma * g.transpose() * &g;
    let kinv = k.try_inverse().unwrap();
    gamma * &g * kinv * g.transpose()
}

fn spread(a: &DMatrix<f64>) -> f64 {
    let e = a.clone().symmetric_eigen().eigenvalues;
    let max = e.iter().cloned().fold(f64::MIN, f64::max);
    let min = e.iter().cloned().fold(f64::MAX, f64::min);
    max / min
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn all_strategies_reproduce_the_augmented_solution(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (n, me, mi) = dims(&mut r);
        let sys = random_kkt(&mut r, n, me, mi, true);
        let oracle = sys.oracle_step();
        let tol = 1e-7 * scale(&oracle);

        let aug = strategy_step(StrategyKind::Augmented, &sys, &options(1e7)).unwrap();
        prop_assert!(aug.max_abs_diff(&oracle) <= tol, "augmented {}", aug.max_abs_diff(&oracle));
        let cond = solve_condensed_dense(&sys.inputs(), DEFAULT_DENSE_CAP).unwrap();
        prop_assert!(cond.max_abs_diff(&oracle) <= tol, "condensed {}", cond.max_abs_diff(&oracle));
        let hy = strategy_step(StrategyKind::Hykkt, &sys, &options(1e7)).unwrap();
        prop_assert!(hy.max_abs_diff(&oracle) <= tol, "hykkt {}", hy.max_abs_diff(&oracle));
    }

    #[test]
    fn lifted_is_exact_without_equalities(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (n, _, mi) = dims(&mut r);
        let sys = random_kkt(&mut r, n, 0, mi, true);
        let oracle = sys.oracle_step();
        let step = strategy_step(StrategyKind::Lifted, &sys, &options(1e7)).unwrap();
        prop_assert!(step.max_abs_diff(&oracle) <= 1e-9 * scale(&oracle));
    }

    #[test]
    fn hykkt_step_does_not_depend_on_gamma(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (n, me, mi) = dims(&mut r);
        let sys = random_kkt(&mut r, n, me.max(1), mi, true);
        let steps: Vec<Step> = [1e4, 1e6, 1e8]
            .iter()
            .map(|&g| strategy_step(StrategyKind::Hykkt, &sys, &options(g)).unwrap())
            .collect();
        let tol = 1e-6 * scale(&steps[0]);
        prop_assert!(steps[0].max_abs_diff(&steps[1]) <= tol);
        prop_assert!(steps[0].max_abs_diff(&steps[2]) <= tol);
    }

    #[test]
    fn scaled_schur_spread_shrinks_with_gamma(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.random_range(3..=12);
        let me = r.random_range(2..=n / 2 + 1).min(n);
        let mi = r.random_range(0..=n);
        let sys = random_kkt(&mut r, n, me, mi, true);
        let spreads: Vec<f64> = [1.0, 10.0, 100.0, 1e3, 1e4].iter().map(|&g| spread(&scaled_schur(&sys, g))).collect();
        for w in spreads.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-9), "{spreads:?}");
        }
        prop_assert!(spreads[4] < 1.0 + 1e-2, "{spreads:?}");
    }

    #[test]
    fn cg_iterations_respect_the_krylov_bound(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (n, me, mi) = dims(&mut r);
        let sys = random_kkt(&mut r, n, me.max(1), mi, true);
        let inputs = sys.inputs();
        let mut s = HyKktStrategy::new(&inputs.patterns(), &options(1e7)).unwrap();
        let res = s.solve(&inputs).unwrap();
        // at most one iteration per distinct eigenvalue of the Schur complement
        prop_assert!(res.telemetry.cg_iterations <= sys.g.len() + 1, "{} > {}", res.telemetry.cg_iterations, sys.g.len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn condensed_inertia_test_is_equivalent(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (n, me, mi) = dims(&mut r);
        let sys = random_kkt(&mut r, n, me, mi, false);
        let aug = eigen_inertia(&sys.augmented());
        let cond = eigen_inertia(&sys.condensed_kkt());
        prop_assert_eq!(aug == (n + mi, 0, mi + me), cond == (n, 0, me), "aug {:?} cond {:?}", aug, cond);
        // the positive count of K decides both
        prop_assert_eq!(aug.0 - cond.0, mi);
        prop_assert_eq!(aug.2 - cond.2, mi);
    }

    #[test]
    fn augmented_strategy_detects_inertia_like_the_eigen_oracle(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (n, me, mi) = dims(&mut r);
        let sys = random_kkt(&mut r, n, me, mi, false);
        let expected = (n + mi, 0, mi + me);
        let eig = eigen_inertia(&sys.augmented());
        prop_assume!(eig.1 == 0);
        let inputs = sys.inputs();
        let mut s = AugmentedStrategy::new(&inputs.patterns(), &options(1e7)).unwrap();
        match s.solve(&inputs) {
            Ok(_) => prop_assert_eq!(eig, expected),
            Err(KktError::WrongInertia { found, .. }) => {
                prop_assert_ne!(eig, expected);
                prop_assert_eq!((found.positive, found.zero, found.negative), eig);
            }
            Err(e) => prop_assert!(false, "unexpected {e}"),
        }
    }
}

fn random_spd_values(r: &mut ChaCha8Rng, pattern: &[(usize, usize)], n: usize) -> CscMatrix {
    let mut t: Vec<(usize, usize, f64)> = pattern.iter().map(|&(i, j)| (i, j, r.random_range(-1.0..1.0))).collect();
    t.extend((0..n).map(|i| (i, i, n as f64 + r.random_range(1.0..2.0))));
    CscMatrix::from_triplets(n, n, &t, true).unwrap()
}

#[test]
fn numeric_refactorization_reuses_one_symbolic_analysis() {
    let mut r = rng(7);
    let n = 60;
    let pattern: Vec<(usize, usize)> =
        (0..n).flat_map(|i| (0..i).map(move |j| (i, j))).filter(|_| r.random_bool(0.08)).collect();
    let mut r = rng(8);
    let first = random_spd_values(&mut r, &pattern, n);
    let sym = analyse(&first).unwrap();
    let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
    for _ in 0..100 {
        let a = random_spd_values(&mut r, &pattern, n);
        let reused = numeric_factor(&sym, &a).unwrap();
        assert!(Arc::ptr_eq(reused.symbolic(), &sym));
        let fresh = numeric_factor(&analyse(&a).unwrap(), &a).unwrap();
        let (x1, x2) = (reused.solve(&b).unwrap(), fresh.solve(&b).unwrap());
        let diff = x1.iter().zip(&x2).fold(0.0_f64, |m, (p, q)| m.max((p - q).abs()));
        let norm = x2.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        assert!(diff <= 1e-12 * norm, "{diff}");
    }
    assert_eq!(Arc::strong_count(&sym), 1);
}

#[test]
fn sparse_strategies_analyse_once_per_solve() {
    let dm = build_distillation(5, default_params()).unwrap();
    for kind in [StrategyKind::Hykkt, StrategyKind::Lifted] {
        let report = solve(&dm.model, &SolverOptions::with_strategy(kind));
        assert!(report.is_optimal(), "{kind}: {}", report.status);
        assert_eq!(report.linear_solver.symbolic_analyses, 1, "{kind}");
        assert!(report.linear_solver.numeric_factorizations >= report.iterations, "{kind}");
    }
}

#[test]
fn lifted_strategy_exposes_its_symbolic_analysis() {
    let mut r = rng(3);
    let sys = random_kkt(&mut r, 8, 0, 4, true);
    let inputs = sys.inputs();
    let mut s = LiftedStrategy::new(&inputs.patterns(), &options(1e7)).unwrap();
    let sym = s.symbolic().clone();
    for _ in 0..5 {
        s.solve(&inputs).unwrap();
    }
    assert!(Arc::ptr_eq(s.symbolic(), &sym));
    assert_eq!(s.stats().symbolic_analyses, 1);
    assert_eq!(s.stats().numeric_factorizations, 5);
}

#[test]
fn scaled_schur_spread_tends_to_one_on_a_fixed_instance() {
    let mut r = rng(21);
    let sys = random_kkt(&mut r, 10, 4, 5, true);
    let spreads: Vec<f64> = [1e3, 1e5, 1e7].iter().map(|&g| spread(&scaled_schur(&sys, g))).collect();
    assert!(spreads[0] > spreads[1] && spreads[1] > spreads[2], "{spreads:?}");
    assert!(spreads[2] - 1.0 < 1e-4, "{spreads:?}");
}

#[test]
fn condensed_storage_is_allocated_once() {
    let mut r = rng(5);
    let sys = random_kkt(&mut r, 12, 3, 6, true);
    let inputs = sys.inputs();
    let mut s = HyKktStrategy::new(&inputs.patterns(), &options(1e7)).unwrap();
    let ptrs = (s.matrix().col_ptr().as_ptr(), s.matrix().row_idx().as_ptr(), s.matrix().values().as_ptr());
    for k in 0..5 {
        let mut shifted = inputs.clone();
        shifted.d_s.iter_mut().for_each(|d| *d *= 1.0 + k as f64);
        s.solve(&shifted).unwrap();
        let now = (s.matrix().col_ptr().as_ptr(), s.matrix().row_idx().as_ptr(), s.matrix().values().as_ptr());
        assert_eq!(now, ptrs);
    }
}
