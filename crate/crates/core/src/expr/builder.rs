//! Mutable model description, consumed by [`compile`](super::compile).

use super::expr::Expr;
use super::CompileError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockId(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone)]
pub struct VariableBlock {
    pub name: String,
    pub dims: Vec<usize>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub start: Vec<f64>,
}

impl VariableBlock {
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Finite set of index tuples, each optionally carrying data values.
#[derive(Debug, Clone, PartialEq)]
pub struct Instances {
    arity: usize,
    tuples: Vec<i64>,
    data_width: usize,
    data: Vec<f64>,
}

impl Instances {
    pub fn new(arity: usize, tuples: Vec<Vec<i64>>) -> Self {
        let mut flat = Vec::with_capacity(arity * tuples.len());
        for t in &tuples {
            assert_eq!(t.len(), arity, "tuple arity mismatch");
            flat.extend_from_slice(t);
        }
        Self { arity, tuples: flat, data_width: 0, data: Vec::new() }
    }

    /// One-dimensional index set `lo..=hi`.
    pub fn range(lo: i64, hi: i64) -> Self {
        Self::new(1, (lo..=hi).map(|i| vec![i]).collect())
    }

    /// Cartesian product, last coordinate varying fastest.
    pub fn product(ranges: &[(i64, i64)]) -> Self {
        let mut tuples: Vec<Vec<i64>> = vec![vec![]];
        for &(lo, hi) in ranges {
            let mut next = Vec::new();
            for t in &tuples {
                for i in lo..=hi {
                    let mut u = t.clone();
                    u.push(i);
                    next.push(u);
                }
            }
            tuples = next;
        }
        Self::new(ranges.len(), tuples)
    }

    /// Attaches `width` data values per tuple.
    pub fn with_data(mut self, width: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * self.len(), "data length must be width × instances");
        self.data_width = width;
        self.data = data;
        self
    }

    pub fn len(&self) -> usize {
        self.tuples.len().checked_div(self.arity).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn tuple(&self, k: usize) -> &[i64] {
        &self.tuples[k * self.arity..(k + 1) * self.arity]
    }

    pub fn data_width(&self) -> usize {
        self.data_width
    }

    pub fn data(&self, k: usize) -> &[f64] {
        &self.data[k * self.data_width..(k + 1) * self.data_width]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConstraintKind {
    /// `g(x) = 0`
    Equality,
    /// `h(x) <= 0`, i.e. `h(x) + s = 0` with `s >= 0`
    Inequality,
    /// `-τ <= c(x) <= τ`, carried as `c(x) + s = 0` with `-τ <= s <= τ`
    Ranged { tau: f64 },
}

#[derive(Debug, Clone)]
pub(crate) struct PatternSpec {
    pub expr: Expr,
    pub instances: Instances,
    pub name: String,
}

#[derive(Debug, Clone)]
pub(crate) struct ConstraintSpec {
    pub pattern: PatternSpec,
    pub kind: ConstraintKind,
}

/// Single-owner model description: variable blocks, scalar parameters,
/// objective terms and constraint families, each written once as a template
/// and instantiated over an index set.
#[derive(Debug, Clone, Default)]
pub struct ModelBuilder {
    pub(crate) blocks: Vec<VariableBlock>,
    pub(crate) params: Vec<(String, f64)>,
    pub(crate) objectives: Vec<PatternSpec>,
    pub(crate) constraints: Vec<ConstraintSpec>,
}

impl ModelBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares a block of variables with uniform bounds and start value.
    pub fn add_variables(
        &mut self,
        name: &str,
        dims: &[usize],
        lower: f64,
        upper: f64,
        start: f64,
    ) -> Result<BlockId, CompileError> {
        let len: usize = dims.iter().product();
        if dims.is_empty() || len == 0 {
            return Err(CompileError::EmptyIndexSet(format!("variable block {name}")));
        }
        if !(lower <= upper) {
            return Err(CompileError::InvalidBounds(name.to_string()));
        }
        self.blocks.push(VariableBlock {
            name: name.to_string(),
            dims: dims.to_vec(),
            lower: vec![lower; len],
            upper: vec![upper; len],
            start: vec![start; len],
        });
        Ok(BlockId(self.blocks.len() - 1))
    }

    pub fn set_start(&mut self, block: BlockId, start: Vec<f64>) -> Result<(), CompileError> {
        let b = self.blocks.get_mut(block.0).ok_or(CompileError::UnknownBlock(block.0))?;
        if start.len() != b.len() {
            return Err(CompileError::Dimension(format!("start values for block {}", b.name)));
        }
        b.start = start;
        Ok(())
    }

    pub fn set_bounds(&mut self, block: BlockId, lower: Vec<f64>, upper: Vec<f64>) -> Result<(), CompileError> {
        let b = self.blocks.get_mut(block.0).ok_or(CompileError::UnknownBlock(block.0))?;
        if lower.len() != b.len() || upper.len() != b.len() {
            return Err(CompileError::Dimension(format!("bounds for block {}", b.name)));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(CompileError::InvalidBounds(b.name.clone()));
        }
        b.lower = lower;
        b.upper = upper;
        Ok(())
    }

    pub fn add_parameter(&mut self, name: &str, value: f64) -> ParamId {
        self.params.push((name.to_string(), value));
        ParamId(self.params.len() - 1)
    }

    /// Adds `Σ_{t ∈ instances} expr(t)` to the objective.
    pub fn add_objective(&mut self, name: &str, expr: Expr, instances: Instances) {
        self.objectives.push(PatternSpec { expr, instances, name: name.to_string() });
    }

    /// Adds one constraint row per instance.
    pub fn add_constraints(&mut self, name: &str, expr: Expr, instances: Instances, kind: ConstraintKind) {
        self.constraints.push(ConstraintSpec { pattern: PatternSpec { expr, instances, name: name.to_string() }, kind });
    }

    pub fn blocks(&self) -> &[VariableBlock] {
        &self.blocks
    }

    pub fn block_len(&self, block: BlockId) -> usize {
        self.blocks[block.0].len()
    }
}
