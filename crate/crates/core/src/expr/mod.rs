//! Pattern-based model construction and automatic differentiation.
//!
//! A model is written as a handful of expression templates, each
//! instantiated over an index set. Templates are taped once; evaluation runs
//! the same tape for every instance, reading only the variables named by
//! that instance's index tuple. Jacobian and Hessian coordinates are
//! resolved and deduplicated at compile time.

mod builder;
#[allow(clippy::module_inception)]
mod expr;
mod model;
mod tape;

pub use builder::{BlockId, ConstraintKind, Instances, ModelBuilder, ParamId, VariableBlock};
pub use expr::{BinaryOp, Expr, IndexTerm, UnaryOp, VarRef};
pub use model::{compile, BlockInfo, CompiledModel};
pub use tape::ExprTemplate;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompileError {
    #[error("model declares no variable blocks")]
    NoVariables,
    #[error("model declares no objective or constraint patterns")]
    NoPatterns,
    #[error("empty index set: {0}")]
    EmptyIndexSet(String),
    #[error("unresolved variable reference in pattern {pattern}: {detail}")]
    UnresolvedVariable { pattern: String, detail: String },
    #[error("unknown variable block {0}")]
    UnknownBlock(usize),
    #[error("unknown parameter {0}")]
    UnknownParameter(usize),
    #[error("invalid bounds on block {0} (need lower <= upper)")]
    InvalidBounds(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("non-finite value in pattern {pattern} ({name}), instance {instance}")]
    NonFinite { pattern: usize, name: String, instance: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}
