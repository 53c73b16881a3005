use std::sync::Arc;

use crate::sparse::{analyse, cg_solve, numeric_factor, SparseError, SymbolicFactorization};

use super::{
    augmented_residual, condensed_rhs, dump_matrix, recover_slack_dual, AugmentedForm, CondensedAssembler, KktError,
    KktInputs, KktPatterns, KktStrategy, LinearSolverStats, Step, StepResult, StepTelemetry, StrategyKind,
    StrategyOptions,
};

/// `r_γ = r1 + Hᵀ(D_s r4 − r2) + γ Gᵀ r3`.
pub fn hykkt_rhs(inputs: &KktInputs, gamma: f64) -> Vec<f64> {
    let (top, _) = condensed_rhs(inputs);
    let mut r: Vec<f64> = top.iter().map(|v| -v).collect();
    let scaled: Vec<f64> = inputs.r3.iter().map(|v| gamma * v).collect();
    inputs.g.mul_t_add(&scaled, &mut r);
    r
}

/// HyKKT: factorize `K_γ = K + γ GᵀG` by Cholesky and solve the dual
/// Schur system `G K_γ⁻¹ Gᵀ dy = r3 − G K_γ⁻¹ r_γ` by matrix-free CG.
///
/// The `−δc` block of the regularized system is not represented; the
/// augmentation plays that role.
#[derive(Debug)]
pub struct HyKktStrategy {
    assembler: CondensedAssembler,
    symbolic: Arc<SymbolicFactorization>,
    options: StrategyOptions,
    stats: LinearSolverStats,
}

impl HyKktStrategy {
    pub fn new(patterns: &KktPatterns, options: &StrategyOptions) -> Result<Self, KktError> {
        if !(options.gamma > 0.0) {
            return Err(KktError::Unsupported { strategy: StrategyKind::Hykkt, reason: "γ must be positive".into() });
        }
        let assembler = CondensedAssembler::new(patterns, true)?;
        let symbolic = analyse(assembler.matrix())?;
        let stats = LinearSolverStats {
            symbolic_analyses: 1,
            matrix_nnz: assembler.matrix().nnz(),
            factor_nnz: symbolic.factor_nnz(),
            ..Default::default()
        };
        Ok(Self { assembler, symbolic, options: options.clone(), stats })
    }

    pub fn gamma(&self) -> f64 {
        self.options.gamma
    }

    pub fn set_gamma(&mut self, gamma: f64) {
        self.options.gamma = gamma;
    }

    pub fn symbolic(&self) -> &Arc<SymbolicFactorization> {
        &self.symbolic
    }

    /// The assembled `K_γ` of the last call to `solve` (lower triangle).
    pub fn matrix(&self) -> &crate::sparse::CscMatrix {
        self.assembler.matrix()
    }
}

impl KktStrategy for HyKktStrategy {
    fn kind(&self) -> StrategyKind {
        StrategyKind::Hykkt
    }

    fn solve(&mut self, inputs: &KktInputs) -> Result<StepResult, KktError> {
        inputs.validate()?;
        let gamma = self.options.gamma;
        let k = self.assembler.assemble(inputs, Some(gamma))?;
        dump_matrix(&self.options.dump_dir, StrategyKind::Hykkt, self.stats.numeric_factorizations, k)?;
        self.stats.numeric_factorizations += 1;
        let factor = match numeric_factor(&self.symbolic, k) {
            Ok(f) => f,
            Err(SparseError::NotPositiveDefinite { pivot }) => return Err(KktError::NotPositiveDefinite { pivot }),
            Err(e) => return Err(e.into()),
        };
        let (n, me) = (inputs.n(), inputs.m_e());
        let r_gamma = hykkt_rhs(inputs, gamma);

        let (dy, cg_iterations) = if me == 0 {
            (Vec::new(), 0)
        } else {
            let t = factor.solve(&r_gamma)?;
            let mut gt = vec![0.0; me];
            inputs.g.mul_add(&t, &mut gt);
            let rhs: Vec<f64> = (0..me).map(|j| inputs.r3[j] - gt[j]).collect();
            let mut gtv = vec![0.0; n];
            let mut solve_error = None;
            let schur = |v: &[f64], out: &mut [f64]| {
                gtv.iter_mut().for_each(|x| *x = 0.0);
                inputs.g.mul_t_add(v, &mut gtv);
                if let Err(e) = factor.solve_in_place(&mut gtv) {
                    solve_error = Some(e);
                }
                out.iter_mut().for_each(|x| *x = 0.0);
                inputs.g.mul_add(&gtv, out);
            };
            let outcome = cg_solve(schur, &rhs, self.options.cg_tol, self.options.cg_max_iter);
            if let Some(e) = solve_error {
                return Err(e.into());
            }
            match outcome {
                Ok(o) => (o.x, o.iterations),
                Err(SparseError::NoConvergence { iterations, relative_residual, .. }) => {
                    self.stats.cg_iterations += iterations;
                    return Err(KktError::CgFailure { iterations, residual: relative_residual });
                }
                Err(e) => return Err(e.into()),
            }
        };

        let mut rhs = r_gamma;
        inputs.g.mul_t_add(&dy, &mut rhs);
        rhs.iter_mut().for_each(|v| *v = -*v);
        factor.solve_in_place(&mut rhs)?;
        let dx = rhs;
        let (ds, dz) = recover_slack_dual(&dx, inputs);
        self.stats.solves += 1;
        self.stats.cg_iterations += cg_iterations;
        let step = Step { dx, ds, dy, dz };
        let residual = augmented_residual(inputs, &step, AugmentedForm::Condensed);
        Ok(StepResult { step, telemetry: StepTelemetry { cg_iterations, refinement_iterations: 0, residual, degraded: false } })
    }

    fn stats(&self) -> &LinearSolverStats {
        &self.stats
    }
}
