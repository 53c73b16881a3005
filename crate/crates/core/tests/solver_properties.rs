#![allow(clippy::needless_range_loop)]

mod common;

use common::{distillation_loop_derivatives, distillation_loops, max_diff, rng};
use condensed_ipm::cli::{run, RunConfig};
use condensed_ipm::distillation::{build_distillation, default_params};
use condensed_ipm::expr::{compile, CompiledModel, ConstraintKind, Expr, IndexTerm, Instances, ModelBuilder};
use condensed_ipm::ipm::{kkt_residual, solve, Filter, PrimalDualPoint, SolveReport, SolverOptions};
use condensed_ipm::kkt::StrategyKind;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Convex quadratic `½ xᵀQx + cᵀx` with `Q = diag(q) + off-diagonal coupling`.
struct Qp {
    q: Vec<Vec<f64>>,
    c: Vec<f64>,
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

fn random_qp(r: &mut ChaCha8Rng, n: usize, me: usize) -> Qp {
    let mut q = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..i {
            let v = if r.random_bool(0.5) { r.random_range(-0.5..0.5) } else { 0.0 };
            q[i][j] = v;
            q[j][i] = v;
        }
        q[i][i] = n as f64 * 0.5 + r.random_range(0.5..2.0);
    }
    let c = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
    let a = (0..me)
        .map(|k| (0..n).map(|j| if j == k { r.random_range(1.0..2.0) } else if j >= me { r.random_range(-1.0..1.0) } else { 0.0 }).collect())
        .collect();
    let b = (0..me).map(|_| r.random_range(-1.0..1.0)).collect();
    Qp { q, c, a, b }
}

fn linear(row: &[f64], v: &dyn Fn(usize) -> Expr, rhs: f64) -> Expr {
    row.iter().enumerate().fold(Expr::constant(-rhs), |e, (j, &a)| e + a * v(j))
}

/// Builds the QP, optionally with the box `[-1, 1]` on every other variable
/// and the inequality `Σ x ≤ 1`.
fn qp_model(qp: &Qp, boxed: bool) -> CompiledModel {
    let n = qp.c.len();
    let mut b = ModelBuilder::new();
    let blocks: Vec<_> = (0..n)
        .map(|i| {
            let (lo, hi) = if boxed && i % 2 == 0 { (-1.0, 1.0) } else { (f64::NEG_INFINITY, f64::INFINITY) };
            b.add_variables(&format!("x{i}"), &[1], lo, hi, 0.0).unwrap()
        })
        .collect();
    let v = |i: usize| Expr::var(blocks[i], &[IndexTerm::Fixed(0)]);
    for i in 0..n {
        let mut e = 0.5 * qp.q[i][i] * v(i).square() + qp.c[i] * v(i);
        for j in 0..i {
            if qp.q[i][j] != 0.0 {
                e = e + qp.q[i][j] * v(i) * v(j);
            }
        }
        b.add_objective(&format!("f{i}"), e, Instances::range(0, 0));
    }
    for (k, row) in qp.a.iter().enumerate() {
        b.add_constraints(&format!("g{k}"), linear(row, &v, qp.b[k]), Instances::range(0, 0), ConstraintKind::Equality);
    }
    if boxed {
        b.add_constraints("sum", linear(&vec![1.0; n], &v, 1.0), Instances::range(0, 0), ConstraintKind::Inequality);
    }
    compile(&b).unwrap()
}

/// Solution of the equality-constrained QP from its linear KKT system.
fn qp_oracle(qp: &Qp) -> Vec<f64> {
    let (n, me) = (qp.c.len(), qp.b.len());
    let k = DMatrix::from_fn(n + me, n + me, |i, j| match (i < n, j < n) {
        (true, true) => qp.q[i][j],
        (false, true) => qp.a[i - n][j],
        (true, false) => qp.a[j - n][i],
        _ => 0.0,
    });
    let rhs = DVector::from_iterator(n + me, qp.c.iter().map(|v| -v).chain(qp.b.iter().cloned()));
    k.lu().solve(&rhs).unwrap().as_slice()[..n].to_vec()
}

/// Invariants every successful solve must satisfy.
fn check_optimal_report(model: &CompiledModel, report: &SolveReport, tol: f64) -> Result<(), TestCaseError> {
    prop_assert!(report.is_optimal(), "{}: {:?}", report.status, report.message);
    prop_assert!(report.residual.unscaled <= tol, "unscaled {}", report.residual.unscaled);
    let w = report.solution.as_ref().unwrap();
    let res = kkt_residual(model, w, 0.0).unwrap();
    prop_assert!(res.unscaled <= tol, "recomputed {}", res.unscaled);
    for i in 0..model.n() {
        let (lo, hi) = (model.lower_bounds()[i], model.upper_bounds()[i]);
        prop_assert!(w.x[i] > lo && w.x[i] < hi);
        prop_assert!(!lo.is_finite() || w.zl[i] > 0.0);
        prop_assert!(!hi.is_finite() || w.zu[i] > 0.0);
    }
    prop_assert!(w.s.iter().all(|&s| s > 0.0) && w.nu.iter().all(|&v| v > 0.0));
    for it in &report.log {
        prop_assert!(it.min_gap > 0.0 && it.min_multiplier > 0.0, "iteration {} left the interior", it.iter);
    }
    for pair in report.log.windows(2) {
        prop_assert!(pair[1].mu <= pair[0].mu);
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(30))]

    #[test]
    fn equality_qps_reach_the_linear_oracle(seed in any::<u64>(), kind in prop::sample::select(StrategyKind::ALL.to_vec())) {
        let mut r = rng(seed);
        let n = r.random_range(2..=7);
        let me = r.random_range(0..=n / 2);
        let qp = random_qp(&mut r, n, me);
        let model = qp_model(&qp, false);
        let opts = SolverOptions::with_strategy(kind);
        let report = solve(&model, &opts);
        // the relaxed formulation only satisfies equalities up to τ
        let tol = if kind == StrategyKind::Lifted && me > 0 { 1e-4 } else { 1e-6 };
        if kind != StrategyKind::Lifted || me == 0 {
            check_optimal_report(&model, &report, opts.tol)?;
        } else {
            prop_assert!(report.is_optimal());
        }
        let x = &report.solution.as_ref().unwrap().x;
        prop_assert!(max_diff(x, &qp_oracle(&qp)) <= tol, "{x:?}");
    }

    #[test]
    fn bounded_qps_satisfy_the_optimality_invariants(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.random_range(2..=8);
        let me = r.random_range(0..=n / 3);
        let qp = random_qp(&mut r, n, me);
        let model = qp_model(&qp, true);
        let opts = SolverOptions::default();
        check_optimal_report(&model, &solve(&model, &opts), opts.tol)?;
    }

    #[test]
    fn filter_never_keeps_dominated_entries(pairs in prop::collection::vec((0.0..10.0f64, -10.0..10.0f64), 1..40)) {
        let mut f = Filter::new();
        for &(t, p) in &pairs {
            f.insert(t, p);
            prop_assert!(!f.acceptable(t, p));
        }
        let e = f.entries();
        for (i, a) in e.iter().enumerate() {
            for (j, b) in e.iter().enumerate() {
                if i != j {
                    prop_assert!(!(a.0 <= b.0 && a.1 <= b.1), "{a:?} dominates {b:?}");
                }
            }
        }
        // every inserted pair is blocked by some kept entry
        for &(t, p) in &pairs {
            prop_assert!(e.iter().any(|&(a, b)| a <= t && b <= p));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn perturbed_distillation_solves_are_optimal(seed in any::<u64>()) {
        let mut config = RunConfig::new(5, StrategyKind::Hykkt);
        config.perturb = 0.05;
        config.seed = seed;
        let out = run(&config).unwrap();
        let dm = build_distillation(5, out.params.clone()).unwrap();
        check_optimal_report(&dm.model, &out.report, config.tol)?;
    }

    #[test]
    fn residual_matches_the_loop_transcription(seed in any::<u64>()) {
        let dm = build_distillation(2, default_params()).unwrap();
        let m = &dm.model;
        let mut r = rng(seed);
        let (n, me) = (m.n(), m.m_e());
        let mut w = PrimalDualPoint::zeros(n, me, 0);
        w.x = m.start().iter().map(|v| v * (1.0 + 0.05 * r.random_range(-1.0..1.0))).collect();
        for i in 0..n {
            let (lo, hi) = (m.lower_bounds()[i], m.upper_bounds()[i]);
            w.x[i] = w.x[i].clamp(lo + 1e-3, hi - 1e-3);
            if lo.is_finite() { w.zl[i] = r.random_range(0.1..2.0); }
            if hi.is_finite() { w.zu[i] = r.random_range(0.1..2.0); }
        }
        w.y = (0..me).map(|_| r.random_range(-1.0..1.0)).collect();
        let mu = 0.01;
        let res = kkt_residual(m, &w, mu).unwrap();

        let (_, g) = distillation_loops(&dm, &w.x);
        let (grad, jac) = distillation_loop_derivatives(&dm, &w.x);
        for j in 0..n {
            let s: f64 = grad[j] + (0..me).map(|k| jac[k][j] * w.y[k]).sum::<f64>() - w.zl[j] + w.zu[j];
            prop_assert!((s - res.stationarity[j]).abs() <= 1e-12 * s.abs().max(1.0));
            let lo = m.lower_bounds()[j];
            let want = if lo.is_finite() { (w.x[j] - lo) * w.zl[j] - mu } else { 0.0 };
            prop_assert!((want - res.lower_complementarity[j]).abs() <= 1e-12);
        }
        prop_assert!(max_diff(&g, &res.equality) <= 1e-12);
        let primal = g.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        prop_assert!((primal - res.primal_infeasibility).abs() <= 1e-12);
    }
}

#[test]
fn augmented_and_hykkt_follow_the_same_path() {
    let dm = build_distillation(5, default_params()).unwrap();
    let iterates = |kind| {
        let mut opts = SolverOptions::with_strategy(kind);
        opts.record_iterates = true;
        solve(&dm.model, &opts)
    };
    let a = iterates(StrategyKind::Augmented);
    let h = iterates(StrategyKind::Hykkt);
    assert!(a.is_optimal() && h.is_optimal());
    assert_eq!(a.iterations, h.iterations);
    for (k, (p, q)) in a.iterates.iter().zip(&h.iterates).take(10).enumerate() {
        let scale = p.x.iter().chain(&p.y).fold(1.0_f64, |m, v| m.max(v.abs()));
        assert!(max_diff(&p.x, &q.x) <= 1e-6 * scale, "x differs at iterate {k}");
        assert!(max_diff(&p.y, &q.y) <= 1e-6 * scale, "y differs at iterate {k}");
    }
}

#[test]
fn strategies_agree_on_the_optimum() {
    let dm = build_distillation(10, default_params()).unwrap();
    let reports: Vec<SolveReport> =
        StrategyKind::ALL.iter().map(|&k| solve(&dm.model, &SolverOptions::with_strategy(k))).collect();
    for r in &reports {
        assert!(r.is_optimal(), "{}: {}", r.strategy, r.status);
    }
    let (aug, lifted, hy) = (&reports[0], &reports[1], &reports[2]);
    assert!((aug.objective - hy.objective).abs() <= 1e-8 * hy.objective.abs());
    // relaxation by τ moves the optimum by O(τ)
    assert!((lifted.objective - hy.objective).abs() <= 1e-4 * hy.objective.abs());
    assert!(lifted.equality_violation <= 1e-5);
    assert!(hy.equality_violation <= 1e-6);
}
