use std::sync::Arc;

use crate::sparse::{analyse, numeric_factor, richardson_refine, CholeskyFactor, SparseError, SymbolicFactorization};

use super::{
    augmented_apply, augmented_residual, dump_matrix, split_step, AugmentedForm, CondensedAssembler, KktError,
    KktInputs, KktPatterns, KktStrategy, LinearSolverStats, StepResult, StepTelemetry, StrategyKind, StrategyOptions,
};

/// Lifted-KKT: the problem carries no equality rows (they were relaxed into
/// ranges), so the condensed matrix alone determines the step and is
/// factorized by sparse Cholesky.
///
/// The Cholesky solve is used as the approximate inverse inside Richardson
/// refinement on the (unreduced) augmented operator; that is where the large
/// entries of `D_s` for the tight ranges cost accuracy.
#[derive(Debug)]
pub struct LiftedStrategy {
    assembler: CondensedAssembler,
    symbolic: Arc<SymbolicFactorization>,
    options: StrategyOptions,
    stats: LinearSolverStats,
}

impl LiftedStrategy {
    pub fn new(patterns: &KktPatterns, options: &StrategyOptions) -> Result<Self, KktError> {
        if patterns.m_e() > 0 {
            return Err(KktError::Unsupported {
                strategy: StrategyKind::Lifted,
                reason: format!("{} equality rows; relax them into ranges first", patterns.m_e()),
            });
        }
        let assembler = CondensedAssembler::new(patterns, false)?;
        let symbolic = analyse(assembler.matrix())?;
        let stats = LinearSolverStats {
            symbolic_analyses: 1,
            matrix_nnz: assembler.matrix().nnz(),
            factor_nnz: symbolic.factor_nnz(),
            ..Default::default()
        };
        Ok(Self { assembler, symbolic, options: options.clone(), stats })
    }

    pub fn symbolic(&self) -> &Arc<SymbolicFactorization> {
        &self.symbolic
    }
}

/// Solves the condensed-form augmented system `A v = q` by elimination:
/// `K a = q1 − Hᵀ(q2 − D_s q4)`, `b = q4 − H a`, `c = q2 − D_s b`.
pub(super) fn eliminate(factor: &CholeskyFactor, inputs: &KktInputs, q: &[f64]) -> Result<Vec<f64>, SparseError> {
    let (n, mi) = (inputs.n(), inputs.m_i());
    let (q1, rest) = q.split_at(n);
    let (q2, q4) = rest.split_at(mi);
    let t: Vec<f64> = (0..mi).map(|i| q2[i] - inputs.d_s[i] * q4[i]).collect();
    let mut rhs = q1.to_vec();
    let mut ht = vec![0.0; n];
    inputs.h.mul_t_add(&t, &mut ht);
    rhs.iter_mut().zip(&ht).for_each(|(r, v)| *r -= v);
    let a = factor.solve(&rhs)?;
    let mut ha = vec![0.0; mi];
    inputs.h.mul_add(&a, &mut ha);
    let b: Vec<f64> = (0..mi).map(|i| q4[i] - ha[i]).collect();
    let c: Vec<f64> = (0..mi).map(|i| q2[i] - inputs.d_s[i] * b[i]).collect();
    Ok(a.into_iter().chain(b).chain(c).collect())
}

impl KktStrategy for LiftedStrategy {
    fn kind(&self) -> StrategyKind {
        StrategyKind::Lifted
    }

    fn solve(&mut self, inputs: &KktInputs) -> Result<StepResult, KktError> {
        inputs.validate()?;
        if inputs.m_e() > 0 {
            return Err(KktError::Unsupported { strategy: StrategyKind::Lifted, reason: "equality rows present".into() });
        }
        let k = self.assembler.assemble(inputs, None)?;
        dump_matrix(&self.options.dump_dir, StrategyKind::Lifted, self.stats.numeric_factorizations, k)?;
        self.stats.numeric_factorizations += 1;
        let factor = match numeric_factor(&self.symbolic, k) {
            Ok(f) => f,
            Err(SparseError::NotPositiveDefinite { pivot }) => return Err(KktError::NotPositiveDefinite { pivot }),
            Err(e) => return Err(e.into()),
        };

        let (n, mi) = (inputs.n(), inputs.m_i());
        let b: Vec<f64> = inputs.r1.iter().chain(&inputs.r2).chain(&inputs.r4).map(|v| -v).collect();
        let mut solve_error = None;
        let direct = |q: &[f64]| match eliminate(&factor, inputs, q) {
            Ok(v) => v,
            Err(e) => {
                solve_error = Some(e);
                vec![0.0; q.len()]
            }
        };
        // operator without the (empty) y block: (x, s, z)
        let mut full = vec![0.0; n + 2 * mi];
        let apply = |v: &[f64], out: &mut [f64]| {
            augmented_apply(inputs, AugmentedForm::Condensed, v, &mut full);
            out.copy_from_slice(&full);
        };
        let refined = richardson_refine(direct, apply, &b, self.options.refine_tol, self.options.refine_max_iter);
        if let Some(e) = solve_error {
            return Err(e.into());
        }
        let (x, iterations, degraded) = match refined {
            Ok(r) => (r.x, r.iterations, r.degraded),
            Err(SparseError::RefinementDiverged { iterations, best, .. }) => (best, iterations, true),
            Err(e) => return Err(e.into()),
        };
        self.stats.solves += 1;
        self.stats.refinement_iterations += iterations;
        let step = split_step(&x, n, mi, 0);
        let residual = augmented_residual(inputs, &step, AugmentedForm::Condensed);
        Ok(StepResult {
            step,
            telemetry: StepTelemetry { cg_iterations: 0, refinement_iterations: iterations, residual, degraded },
        })
    }

    fn stats(&self) -> &LinearSolverStats {
        &self.stats
    }
}
