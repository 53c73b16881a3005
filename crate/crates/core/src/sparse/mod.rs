//! Sparse symmetric linear algebra: storage, ordering, LDLᵀ Cholesky with
//! reusable symbolic analysis, a dense inertia-revealing factorization, and
//! Krylov/refinement loops.

mod cholesky;
mod csc;
mod dense;
mod krylov;
mod mtx;
mod ordering;

pub use cholesky::{analyse, numeric_factor, symbolic_cholesky, CholeskyFactor, SymbolicFactorization};
pub use csc::{CooMatrix, CscMatrix, SparsePattern};
pub use dense::{
    dense_ldlt, dense_ldlt_with_cap, DenseInertiaFactor, DenseSymmetric, Inertia, DEFAULT_DENSE_CAP, INERTIA_ZERO_TOL,
};
pub use krylov::{cg_solve, richardson_refine, CgOutcome, Refined};
pub use mtx::{from_matrix_market, read_matrix, to_matrix_market, write_matrix};
pub use ordering::{amd_order, invert_permutation};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SparseError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid sparse structure: {0}")]
    Structure(String),
    #[error("matrix pattern differs from the one used for symbolic analysis")]
    PatternMismatch,
    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },
    #[error("dense factorization of size {n} exceeds the cap of {cap}")]
    DenseCapExceeded { n: usize, cap: usize },
    #[error("conjugate gradient did not converge in {iterations} iterations (residual {relative_residual:e})")]
    NoConvergence { iterations: usize, relative_residual: f64, best: Vec<f64> },
    #[error("iterative refinement diverged after {iterations} iterations (best residual {relative_residual:e})")]
    RefinementDiverged { iterations: usize, relative_residual: f64, best: Vec<f64> },
    #[error("matrix I/O: {0}")]
    Io(String),
}
