use crate::sparse::{dense_ldlt_with_cap, CscMatrix, Inertia, SparseError};

use super::{
    augmented_apply, augmented_residual, dense_augmented, dump_matrix, split_step, AugmentedForm, KktError, KktInputs,
    KktPatterns, KktStrategy, LinearSolverStats, StepResult, StepTelemetry, StrategyKind, StrategyOptions,
};

/// Baseline: dense LBLᵀ of the regularized augmented matrix, inertia read
/// from the pivots.
#[derive(Debug)]
pub struct AugmentedStrategy {
    n: usize,
    m_e: usize,
    m_i: usize,
    cap: usize,
    dump_dir: Option<std::path::PathBuf>,
    stats: LinearSolverStats,
}

impl AugmentedStrategy {
    pub fn new(patterns: &KktPatterns, options: &StrategyOptions) -> Result<Self, KktError> {
        let dim = patterns.n() + 2 * patterns.m_i() + patterns.m_e();
        if dim > options.dense_cap {
            return Err(SparseError::DenseCapExceeded { n: dim, cap: options.dense_cap }.into());
        }
        Ok(Self {
            n: patterns.n(),
            m_e: patterns.m_e(),
            m_i: patterns.m_i(),
            cap: options.dense_cap,
            dump_dir: options.dump_dir.clone(),
            stats: LinearSolverStats { matrix_nnz: dim * (dim + 1) / 2, factor_nnz: dim * (dim + 1) / 2, ..Default::default() },
        })
    }

    pub fn expected_inertia(&self) -> Inertia {
        Inertia::new(self.n + self.m_i, 0, self.m_i + self.m_e)
    }
}

impl KktStrategy for AugmentedStrategy {
    fn kind(&self) -> StrategyKind {
        StrategyKind::Augmented
    }

    fn uses_dual_regularization(&self) -> bool {
        true
    }

    fn solve(&mut self, inputs: &KktInputs) -> Result<StepResult, KktError> {
        inputs.validate()?;
        let a = dense_augmented(inputs, AugmentedForm::Regularized);
        if self.dump_dir.is_some() {
            let dim = a.n();
            let triplets: Vec<_> = (0..dim)
                .flat_map(|j| (j..dim).map(move |i| (i, j)))
                .map(|(i, j)| (i, j, a.get(i, j)))
                .filter(|t| t.2 != 0.0)
                .collect();
            let csc = CscMatrix::from_triplets(dim, dim, &triplets, true)?;
            dump_matrix(&self.dump_dir, self.kind(), self.stats.numeric_factorizations, &csc)?;
        }
        let f = dense_ldlt_with_cap(&a, self.cap)?;
        self.stats.numeric_factorizations += 1;
        let expected = self.expected_inertia();
        if f.inertia() != expected {
            return Err(KktError::WrongInertia { found: f.inertia(), expected });
        }

        let rhs: Vec<f64> = [&inputs.r1, &inputs.r2, &inputs.r3, &inputs.r4]
            .iter()
            .flat_map(|b| b.iter().map(|v| -v))
            .collect();
        // a couple of refinement sweeps with the same factor
        let mut sol = f.solve(&rhs);
        let mut ax = vec![0.0; rhs.len()];
        let mut sweeps = 0;
        for _ in 0..3 {
            augmented_apply(inputs, AugmentedForm::Regularized, &sol, &mut ax);
            let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
            let rn = r.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            let bn = rhs.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
            if rn <= 1e-14 * bn {
                break;
            }
            let d = f.solve(&r);
            sol.iter_mut().zip(&d).for_each(|(s, d)| *s += d);
            sweeps += 1;
        }
        self.stats.solves += 1;
        self.stats.refinement_iterations += sweeps;
        let step = split_step(&sol, self.n, self.m_i, self.m_e);
        let residual = augmented_residual(inputs, &step, AugmentedForm::Regularized);
        Ok(StepResult {
            step,
            telemetry: StepTelemetry { cg_iterations: 0, refinement_iterations: sweeps, residual, degraded: false },
        })
    }

    fn stats(&self) -> &LinearSolverStats {
        &self.stats
    }
}
