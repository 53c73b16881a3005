#![allow(clippy::needless_range_loop)]

mod common;

use common::{dense_of, distillation_loop_derivatives, distillation_loops, fd_errors, random_point, rng, synthetic_models};
use condensed_ipm::distillation::{build_distillation, default_params};
use condensed_ipm::expr::CompiledModel;
use condensed_ipm::sparse::CooMatrix;
use proptest::prelude::*;
use rand::Rng;

fn multipliers(r: &mut rand_chacha::ChaCha8Rng, m: &CompiledModel) -> (Vec<f64>, Vec<f64>) {
    (
        (0..m.m_e()).map(|_| r.random_range(-1.0..1.0)).collect(),
        (0..m.m_i()).map(|_| r.random_range(-1.0..1.0)).collect(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn distillation_derivatives_match_central_differences(seed in any::<u64>()) {
        let dm = build_distillation(2, default_params()).unwrap();
        let m = &dm.model;
        let mut r = rng(seed);
        let x: Vec<f64> = m.start().iter().map(|v| v * (1.0 + 0.05 * r.random_range(-1.0..1.0))).collect();
        let (y, z) = multipliers(&mut r, m);
        let e = fd_errors(m, &x, &y, &z);
        prop_assert!(e.gradient < 1e-5 && e.jacobian < 1e-5 && e.hessian < 1e-5, "{e:?}");
    }

    #[test]
    fn synthetic_derivatives_match_central_differences(seed in any::<u64>()) {
        let mut r = rng(seed);
        for (name, m) in synthetic_models() {
            let x = random_point(&mut r, &m, 0.3);
            let (y, z) = multipliers(&mut r, &m);
            let e = fd_errors(&m, &x, &y, &z);
            prop_assert!(e.gradient < 1e-5 && e.jacobian < 1e-5 && e.hessian < 1e-5, "{name}: {e:?}");
        }
    }

    #[test]
    fn distillation_first_derivatives_match_loop_transcription(seed in any::<u64>()) {
        let dm = build_distillation(2, default_params()).unwrap();
        let m = &dm.model;
        let mut r = rng(seed);
        let x: Vec<f64> = m.start().iter().map(|v| v * (1.0 + 0.1 * r.random_range(-1.0..1.0))).collect();

        let (f, g) = distillation_loops(&dm, &x);
        let (g_model, _) = m.eval_constraints(&x).unwrap();
        prop_assert!((m.eval_objective(&x).unwrap() - f).abs() <= 1e-12 * f.abs().max(1.0));
        prop_assert_eq!(g.len(), g_model.len());
        for (a, b) in g.iter().zip(&g_model) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }

        let (grad, jac) = distillation_loop_derivatives(&dm, &x);
        let grad_model = m.eval_gradient(&x).unwrap();
        let (gv, _) = m.eval_jacobians(&x).unwrap();
        let jac_model = dense_of(&CooMatrix::new(m.jacobian_eq_pattern().clone(), gv).unwrap(), false);
        for j in 0..m.n() {
            prop_assert!((grad[j] - grad_model[j]).abs() <= 1e-12 * grad[j].abs().max(1.0));
        }
        for (ra, rb) in jac.iter().zip(&jac_model) {
            for (a, b) in ra.iter().zip(rb) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }
}
