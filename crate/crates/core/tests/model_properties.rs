#![allow(clippy::needless_range_loop)]

mod common;

use std::collections::HashSet;

use common::{random_point, rng, synthetic_models};
use condensed_ipm::distillation::{build_distillation, default_params, steady_state};
use condensed_ipm::expr::CompiledModel;
use condensed_ipm::ipm::{solve, SolverOptions};
use proptest::prelude::*;
use rand::Rng;

fn all_values(m: &CompiledModel, x: &[f64]) -> Vec<u64> {
    let (g, h) = m.eval_constraints(x).unwrap();
    let (gv, hv) = m.eval_jacobians(x).unwrap();
    let y = vec![0.5; m.m_e()];
    let z = vec![-0.25; m.m_i()];
    let w = m.eval_hessian_lagrangian(x, &y, &z, 1.0).unwrap();
    std::iter::once(m.eval_objective(x).unwrap())
        .chain(m.eval_gradient(x).unwrap())
        .chain(g)
        .chain(h)
        .chain(gv)
        .chain(hv)
        .chain(w)
        .map(f64::to_bits)
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn evaluations_are_deterministic_and_patterns_fixed(seed in any::<u64>()) {
        let mut r = rng(seed);
        for (name, m) in synthetic_models() {
            let patterns = (m.jacobian_eq_pattern().clone(), m.jacobian_ineq_pattern().clone(), m.hessian_pattern().clone());
            let x1 = random_point(&mut r, &m, 0.3);
            let x2 = random_point(&mut r, &m, 0.3);
            prop_assert_eq!(all_values(&m, &x1), all_values(&m, &x1), "{}", name);
            let (a, b) = (all_values(&m, &x1).len(), all_values(&m, &x2).len());
            prop_assert_eq!(a, b);
            prop_assert_eq!(&patterns.0, m.jacobian_eq_pattern());
            prop_assert_eq!(&patterns.1, m.jacobian_ineq_pattern());
            prop_assert_eq!(&patterns.2, m.hessian_pattern());
        }
    }

    /// Moving one variable only changes the rows and gradient entries whose
    /// patterns mention it.
    #[test]
    fn evaluation_reads_only_pattern_variables(seed in any::<u64>()) {
        let mut r = rng(seed);
        for (name, m) in synthetic_models() {
            let x = random_point(&mut r, &m, 0.3);
            let (g0, h0) = m.eval_constraints(&x).unwrap();
            let grad0 = m.eval_gradient(&x).unwrap();
            let jac_rows = |p: &condensed_ipm::sparse::SparsePattern, j: usize| -> HashSet<usize> {
                p.iter().filter(|&(_, c)| c == j).map(|(r, _)| r).collect()
            };
            let hess: HashSet<(usize, usize)> = m.hessian_pattern().iter().flat_map(|(a, b)| [(a, b), (b, a)]).collect();
            for j in 0..m.n() {
                let mut xp = x.clone();
                xp[j] += 0.1 * r.random_range(0.5..1.0);
                xp[j] = xp[j].min(m.upper_bounds()[j] - 1e-3);
                let (g1, h1) = m.eval_constraints(&xp).unwrap();
                let (eq_rows, in_rows) = (jac_rows(m.jacobian_eq_pattern(), j), jac_rows(m.jacobian_ineq_pattern(), j));
                for i in 0..g0.len() {
                    prop_assert!(eq_rows.contains(&i) || g0[i].to_bits() == g1[i].to_bits(), "{name}: g{i} read x{j}");
                }
                for i in 0..h0.len() {
                    prop_assert!(in_rows.contains(&i) || h0[i].to_bits() == h1[i].to_bits(), "{name}: h{i} read x{j}");
                }
                let grad1 = m.eval_gradient(&xp).unwrap();
                for i in 0..m.n() {
                    prop_assert!(hess.contains(&(i, j)) || grad0[i].to_bits() == grad1[i].to_bits(), "{name}: ∂f/∂x{i} read x{j}");
                }
            }
        }
    }
}

#[test]
fn distillation_dimensions_follow_the_stage_count() {
    for n in [1, 10, 100, 500, 1000] {
        let dm = build_distillation(n, default_params()).unwrap();
        assert_eq!(dm.model.n(), 67 * (n + 1), "N = {n}");
        assert_eq!(dm.model.m_i(), 0);
    }
}

#[test]
fn distillation_couples_adjacent_stages_only() {
    let dm = build_distillation(6, default_params()).unwrap();
    let m = &dm.model;
    let mut rows: Vec<Vec<usize>> = vec![vec![]; m.m_e()];
    for (r, c) in m.jacobian_eq_pattern().iter() {
        rows[r].push(dm.stage_of(c));
    }
    for (i, stages) in rows.iter().enumerate() {
        let (lo, hi) = (stages.iter().min().unwrap(), stages.iter().max().unwrap());
        assert!(hi - lo <= 1, "row {i} spans stages {lo}..{hi}");
    }
    for (a, b) in m.hessian_pattern().iter() {
        assert!(dm.stage_of(a).abs_diff(dm.stage_of(b)) <= 1);
    }
}

#[test]
fn setpoint_start_is_optimal_with_zero_cost() {
    let mut p = default_params();
    p.x1_setpoint = steady_state(&p, p.u_setpoint).unwrap()[0];
    let dm = build_distillation(10, p).unwrap();
    let report = solve(&dm.model, &SolverOptions::default());
    assert!(report.is_optimal(), "{}", report.status);
    assert!(report.objective.abs() <= 1e-6, "objective {}", report.objective);
}
