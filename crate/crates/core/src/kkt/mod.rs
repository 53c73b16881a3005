//! Newton-step linear systems: the augmented baseline, the condensed
//! reduction and its two positive-definite variants (Lifted-KKT, HyKKT).
//!
//! All strategies solve for `(dx, ds, dy, dz)` in
//!
//! ```text
//! [ W   0    Gᵀ  Hᵀ ] [dx]     [r1]
//! [ 0   D_s  0   I  ] [ds] = − [r2]
//! [ G   0    0   0  ] [dy]     [r3]
//! [ H   I    0   0  ] [dz]     [r4]
//! ```
//!
//! where `W` is the Hessian of the Lagrangian plus any diagonal barrier
//! terms for variable bounds.

mod assembly;
mod augmented;
mod dense;
mod hykkt;
mod lifted;

pub use assembly::{condensed_rhs, recover_slack_dual, CondensedAssembler};
pub use augmented::AugmentedStrategy;
pub use dense::{dense_augmented, dense_condensed, dense_condensed_kkt, solve_condensed_dense};
pub use hykkt::{hykkt_rhs, HyKktStrategy};
pub use lifted::LiftedStrategy;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{CompileError, CompiledModel};
use crate::sparse::{CooMatrix, CscMatrix, Inertia, SparseError, SparsePattern, DEFAULT_DENSE_CAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    /// dense symmetric-indefinite factorization of the full system
    Augmented,
    /// relaxed equalities, single Cholesky solve plus refinement
    Lifted,
    /// γ-augmented condensed matrix with a Schur-complement CG
    Hykkt,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 3] = [StrategyKind::Augmented, StrategyKind::Lifted, StrategyKind::Hykkt];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Augmented => "augmented",
            StrategyKind::Lifted => "lifted",
            StrategyKind::Hykkt => "hykkt",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = KktError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| KktError::UnknownStrategy(s.to_string()))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KktError {
    #[error("wrong inertia {found} (expected {expected})")]
    WrongInertia { found: Inertia, expected: Inertia },
    #[error("condensed matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },
    #[error("Schur-complement CG failed after {iterations} iterations (relative residual {residual:.3e})")]
    CgFailure { iterations: usize, residual: f64 },
    #[error("strategy {strategy} cannot solve this system: {reason}")]
    Unsupported { strategy: StrategyKind, reason: String },
    #[error("unknown KKT strategy {0:?}")]
    UnknownStrategy(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

impl KktError {
    /// Failures that the inertia-correction loop answers by regularizing.
    pub fn needs_regularization(&self) -> bool {
        matches!(
            self,
            KktError::WrongInertia { .. } | KktError::NotPositiveDefinite { .. } | KktError::CgFailure { .. }
        )
    }

    /// A zero eigenvalue was detected (dual regularization applies).
    pub fn is_singular(&self) -> bool {
        matches!(self, KktError::WrongInertia { found, .. } if found.zero > 0)
    }
}

/// Numeric data of one Newton system.
#[derive(Debug, Clone)]
pub struct KktInputs {
    /// lower triangle of the Hessian of the Lagrangian (n × n)
    pub w: CooMatrix,
    /// extra diagonal added to `W` (variable-bound barrier terms)
    pub w_diag: Vec<f64>,
    /// equality Jacobian (m_e × n)
    pub g: CooMatrix,
    /// inequality Jacobian (m_i × n)
    pub h: CooMatrix,
    /// slack barrier diagonal, strictly positive
    pub d_s: Vec<f64>,
    pub r1: Vec<f64>,
    pub r2: Vec<f64>,
    pub r3: Vec<f64>,
    pub r4: Vec<f64>,
    pub delta_x: f64,
    pub delta_c: f64,
}

impl KktInputs {
    pub fn n(&self) -> usize {
        self.w.ncols()
    }

    pub fn m_e(&self) -> usize {
        self.g.nrows()
    }

    pub fn m_i(&self) -> usize {
        self.h.nrows()
    }

    pub fn validate(&self) -> Result<(), KktError> {
        let (n, me, mi) = (self.n(), self.m_e(), self.m_i());
        let ok = self.w.nrows() == n
            && self.g.ncols() == n
            && self.h.ncols() == n
            && self.w_diag.len() == n
            && self.d_s.len() == mi
            && self.r1.len() == n
            && self.r2.len() == mi
            && self.r3.len() == me
            && self.r4.len() == mi;
        if !ok {
            return Err(KktError::Dimension(format!("inconsistent KKT blocks for n={n}, m_e={me}, m_i={mi}")));
        }
        if self.w.pattern.iter().any(|(r, c)| r < c) {
            return Err(KktError::Dimension("W must be stored as a lower triangle".into()));
        }
        Ok(())
    }

    pub fn patterns(&self) -> KktPatterns {
        KktPatterns { w: self.w.pattern.clone(), g: self.g.pattern.clone(), h: self.h.pattern.clone() }
    }

    fn rhs_norm(&self) -> f64 {
        [&self.r1, &self.r2, &self.r3, &self.r4]
            .iter()
            .flat_map(|v| v.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Fixed sparsity of the Newton systems of one problem.
#[derive(Debug, Clone)]
pub struct KktPatterns {
    pub w: Arc<SparsePattern>,
    pub g: Arc<SparsePattern>,
    pub h: Arc<SparsePattern>,
}

impl KktPatterns {
    pub fn from_model(model: &CompiledModel) -> Self {
        Self {
            w: model.hessian_pattern().clone(),
            g: model.jacobian_eq_pattern().clone(),
            h: model.jacobian_ineq_pattern().clone(),
        }
    }

    pub fn n(&self) -> usize {
        self.w.ncols()
    }

    pub fn m_e(&self) -> usize {
        self.g.nrows()
    }

    pub fn m_i(&self) -> usize {
        self.h.nrows()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Step {
    pub dx: Vec<f64>,
    pub ds: Vec<f64>,
    pub dy: Vec<f64>,
    pub dz: Vec<f64>,
}

impl Step {
    pub fn max_abs_diff(&self, other: &Step) -> f64 {
        let pairs = [(&self.dx, &other.dx), (&self.ds, &other.ds), (&self.dy, &other.dy), (&self.dz, &other.dz)];
        pairs
            .iter()
            .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StepTelemetry {
    pub cg_iterations: usize,
    pub refinement_iterations: usize,
    /// relative residual of the augmented system the strategy represents
    pub residual: f64,
    /// refinement stopped above tolerance
    pub degraded: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub step: Step,
    pub telemetry: StepTelemetry,
}

/// Counters accumulated over the lifetime of a strategy.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearSolverStats {
    pub symbolic_analyses: usize,
    pub numeric_factorizations: usize,
    pub solves: usize,
    pub cg_iterations: usize,
    pub refinement_iterations: usize,
    /// number of nonzeros in the factorized matrix (lower triangle)
    pub matrix_nnz: usize,
    /// nonzeros of `L` plus the diagonal
    pub factor_nnz: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyOptions {
    /// HyKKT augmentation parameter
    pub gamma: f64,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub refine_tol: f64,
    pub refine_max_iter: usize,
    pub dense_cap: usize,
    /// write every factorized matrix as MatrixMarket into this directory
    pub dump_dir: Option<PathBuf>,
}

impl Default for StrategyOptions {
    fn default() -> Self {
        Self {
            gamma: 1e7,
            cg_tol: 1e-10,
            cg_max_iter: 200,
            refine_tol: 1e-10,
            refine_max_iter: 10,
            dense_cap: DEFAULT_DENSE_CAP,
            dump_dir: None,
        }
    }
}

pub trait KktStrategy: Send {
    fn kind(&self) -> StrategyKind;

    /// Whether wrong inertia is reported with a zero count, so that the
    /// dual regularization `δc` is meaningful.
    fn uses_dual_regularization(&self) -> bool {
        false
    }

    fn solve(&mut self, inputs: &KktInputs) -> Result<StepResult, KktError>;

    fn stats(&self) -> &LinearSolverStats;
}

/// Builds a strategy for the given patterns; sparse strategies run their
/// symbolic analysis here, once.
pub fn new_strategy(
    kind: StrategyKind,
    patterns: &KktPatterns,
    options: &StrategyOptions,
) -> Result<Box<dyn KktStrategy>, KktError> {
    Ok(match kind {
        StrategyKind::Augmented => Box::new(AugmentedStrategy::new(patterns, options)?),
        StrategyKind::Lifted => Box::new(LiftedStrategy::new(patterns, options)?),
        StrategyKind::Hykkt => Box::new(HyKktStrategy::new(patterns, options)?),
    })
}

/// Replaces every equality `g(x) = 0` by `−τ <= g(x) <= τ`.
pub fn relax_equalities(model: &CompiledModel, tau: f64) -> Result<CompiledModel, CompileError> {
    model.with_relaxed_equalities(tau)
}

/// Which regularized augmented matrix a step is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentedForm {
    /// `δx` on the W and slack blocks, `−δc` on both dual blocks
    Regularized,
    /// `δx` on W only and no dual regularization, which the condensed
    /// matrix `W + δx I + Hᵀ D_s H` represents exactly
    Condensed,
}

/// `y = K_aug v` for the chosen form, `v = (x, s, y, z)` stacked.
pub fn augmented_apply(inputs: &KktInputs, form: AugmentedForm, v: &[f64], out: &mut [f64]) {
    let (n, me, mi) = (inputs.n(), inputs.m_e(), inputs.m_i());
    let (vx, rest) = v.split_at(n);
    let (vs, rest) = rest.split_at(mi);
    let (vy, vz) = rest.split_at(me);
    out.iter_mut().for_each(|o| *o = 0.0);
    let (ox, rest) = out.split_at_mut(n);
    let (os, rest) = rest.split_at_mut(mi);
    let (oy, oz) = rest.split_at_mut(me);
    let (sx, dc) = match form {
        AugmentedForm::Regularized => (inputs.delta_x, inputs.delta_c),
        AugmentedForm::Condensed => (0.0, 0.0),
    };

    inputs.w.sym_mul_add(vx, ox);
    for i in 0..n {
        ox[i] += (inputs.w_diag[i] + inputs.delta_x) * vx[i];
    }
    inputs.g.mul_t_add(vy, ox);
    inputs.h.mul_t_add(vz, ox);
    for i in 0..mi {
        os[i] = (inputs.d_s[i] + sx) * vs[i] + vz[i];
    }
    inputs.g.mul_add(vx, oy);
    for j in 0..me {
        oy[j] -= dc * vy[j];
    }
    inputs.h.mul_add(vx, oz);
    for i in 0..mi {
        oz[i] += vs[i] - dc * vz[i];
    }
}

/// `‖K_aug d + r‖∞ / max(1, ‖r‖∞)`.
pub fn augmented_residual(inputs: &KktInputs, step: &Step, form: AugmentedForm) -> f64 {
    let v: Vec<f64> = [&step.dx, &step.ds, &step.dy, &step.dz].iter().flat_map(|b| b.iter().copied()).collect();
    let mut out = vec![0.0; v.len()];
    augmented_apply(inputs, form, &v, &mut out);
    let r = [&inputs.r1, &inputs.r2, &inputs.r3, &inputs.r4];
    let res = out
        .iter()
        .zip(r.iter().flat_map(|b| b.iter()))
        .fold(0.0_f64, |m, (a, b)| m.max((a + b).abs()));
    res / inputs.rhs_norm().max(1.0)
}

fn split_step(v: &[f64], n: usize, mi: usize, me: usize) -> Step {
    Step {
        dx: v[..n].to_vec(),
        ds: v[n..n + mi].to_vec(),
        dy: v[n + mi..n + mi + me].to_vec(),
        dz: v[n + mi + me..].to_vec(),
    }
}

fn dump_matrix(dir: &Option<PathBuf>, kind: StrategyKind, counter: usize, a: &CscMatrix) -> Result<(), KktError> {
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir).map_err(|e| SparseError::Io(e.to_string()))?;
        let path = dir.join(format!("{kind}_{counter:05}.mtx"));
        crate::sparse::write_matrix(path, a)?;
    }
    Ok(())
}
