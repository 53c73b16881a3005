//! Pattern-compiled nonlinear program with fixed derivative sparsity.

use std::collections::HashMap;
use std::sync::Arc;

use super::builder::{ConstraintKind, ModelBuilder, PatternSpec};
use super::expr::IndexTerm;
use super::tape::{ExprTemplate, Scratch};
use super::{CompileError, EvalError};
use crate::sparse::SparsePattern;

#[derive(Debug, Clone)]
pub struct BlockInfo {
    pub name: String,
    pub dims: Vec<usize>,
    pub offset: usize,
}

/// One template instantiated over its index set, with every instance's
/// variables and derivative slots resolved at compile time.
#[derive(Debug, Clone)]
pub(crate) struct CompiledPattern {
    pub id: usize,
    pub name: String,
    pub template: ExprTemplate,
    pub n_instances: usize,
    pub data_width: usize,
    pub data: Vec<f64>,
    /// `n_instances × n_locals` global variable indices
    pub vars: Vec<usize>,
    /// first constraint row (within its own family: equality or inequality)
    pub row_offset: usize,
    pub equality: bool,
    /// `n_instances × jac_locals.len()` slots in the Jacobian value array
    pub jac_slots: Vec<usize>,
    /// `n_instances × hess_pairs.len()` slots in the Hessian value array
    pub hess_slots: Vec<usize>,
    /// 2.0 where an off-diagonal local pair lands on a global diagonal entry
    pub hess_scale: Vec<f64>,
}

impl CompiledPattern {
    fn instance_vars(&self, k: usize) -> &[usize] {
        let w = self.template.n_locals();
        &self.vars[k * w..(k + 1) * w]
    }

    fn instance_data(&self, k: usize) -> &[f64] {
        &self.data[k * self.data_width..(k + 1) * self.data_width]
    }
}

/// Compiled model: `min f(x)` s.t. `g(x) = 0`, `h(x) + s = 0`,
/// `s_lo <= s <= s_hi`, `x_lo <= x <= x_hi`.
///
/// Derivative sparsity is fixed here; every evaluation writes values into
/// the same coordinate slots in a fixed order.
#[derive(Debug, Clone)]
pub struct CompiledModel {
    n: usize,
    m_e: usize,
    m_i: usize,
    blocks: Vec<BlockInfo>,
    x_lower: Vec<f64>,
    x_upper: Vec<f64>,
    x_start: Vec<f64>,
    params: Vec<f64>,
    param_names: Vec<String>,
    slack_lower: Vec<f64>,
    slack_upper: Vec<f64>,
    objectives: Vec<CompiledPattern>,
    constraints: Vec<CompiledPattern>,
    jac_eq: Arc<SparsePattern>,
    jac_ineq: Arc<SparsePattern>,
    hess: Arc<SparsePattern>,
    source: ModelBuilder,
}

fn resolve_var(
    blocks: &[BlockInfo],
    pattern: &PatternSpec,
    var: &super::expr::VarRef,
    tuple: &[i64],
) -> Result<usize, CompileError> {
    let unresolved = |why: String| CompileError::UnresolvedVariable { pattern: pattern.name.clone(), detail: why };
    let b = blocks.get(var.block.0).ok_or_else(|| unresolved(format!("unknown block {}", var.block.0)))?;
    if var.index.len() != b.dims.len() {
        return Err(unresolved(format!("block {} has {} dimensions, reference has {}", b.name, b.dims.len(), var.index.len())));
    }
    let mut flat = 0usize;
    for (term, &dim) in var.index.iter().zip(&b.dims) {
        let coord: i64 = match *term {
            IndexTerm::Fixed(c) => c as i64,
            IndexTerm::Slot { slot, offset } => {
                let base = *tuple
                    .get(slot)
                    .ok_or_else(|| unresolved(format!("tuple slot {slot} beyond arity {}", tuple.len())))?;
                base + offset
            }
        };
        if coord < 0 || coord as usize >= dim {
            return Err(unresolved(format!("{}{:?} out of range at tuple {:?}", b.name, var.index, tuple)));
        }
        flat = flat * dim + coord as usize;
    }
    Ok(b.offset + flat)
}

struct Resolved {
    spec: PatternSpec,
    template: ExprTemplate,
    vars: Vec<usize>,
}

fn resolve(blocks: &[BlockInfo], n_params: usize, spec: &PatternSpec) -> Result<Resolved, CompileError> {
    if spec.instances.is_empty() {
        return Err(CompileError::EmptyIndexSet(spec.name.clone()));
    }
    let template = ExprTemplate::from_expr(&spec.expr);
    if let Some(&p) = template.params_used.iter().find(|&&p| p >= n_params) {
        return Err(CompileError::UnknownParameter(p));
    }
    if let Some(&d) = template.data_used.iter().find(|&&d| d >= spec.instances.data_width()) {
        return Err(CompileError::Dimension(format!("pattern {} reads data slot {d} beyond width {}", spec.name, spec.instances.data_width())));
    }
    let mut vars = Vec::with_capacity(spec.instances.len() * template.n_locals());
    for k in 0..spec.instances.len() {
        let tuple = spec.instances.tuple(k);
        for v in &template.locals {
            vars.push(resolve_var(blocks, spec, v, tuple)?);
        }
    }
    Ok(Resolved { spec: spec.clone(), template, vars })
}

/// Compiles a builder into a model with fixed sparsity.
///
/// Constraint rows are ordered as all equalities in declaration order, then
/// all inequalities (including ranged rows) in declaration order.
pub fn compile(builder: &ModelBuilder) -> Result<CompiledModel, CompileError> {
    if builder.blocks.is_empty() {
        return Err(CompileError::NoVariables);
    }
    if builder.objectives.is_empty() && builder.constraints.is_empty() {
        return Err(CompileError::NoPatterns);
    }
    let mut blocks = Vec::with_capacity(builder.blocks.len());
    let (mut x_lower, mut x_upper, mut x_start) = (Vec::new(), Vec::new(), Vec::new());
    let mut offset = 0;
    for b in &builder.blocks {
        blocks.push(BlockInfo { name: b.name.clone(), dims: b.dims.clone(), offset });
        offset += b.len();
        x_lower.extend_from_slice(&b.lower);
        x_upper.extend_from_slice(&b.upper);
        x_start.extend_from_slice(&b.start);
    }
    let n = offset;
    let n_params = builder.params.len();

    let mut next_id = 0;
    let mut objectives = Vec::new();
    let mut hess_coords: Vec<(usize, usize)> = Vec::new();
    for spec in &builder.objectives {
        let r = resolve(&blocks, n_params, spec)?;
        collect_hess(&r, &mut hess_coords);
        objectives.push((next_id, r));
        next_id += 1;
    }

    let mut eq = Vec::new();
    let mut ineq = Vec::new();
    for c in &builder.constraints {
        let r = resolve(&blocks, n_params, &c.pattern)?;
        collect_hess(&r, &mut hess_coords);
        match c.kind {
            ConstraintKind::Equality => eq.push((next_id, r, c.kind)),
            _ => ineq.push((next_id, r, c.kind)),
        }
        next_id += 1;
    }

    let mut slack_lower = Vec::new();
    let mut slack_upper = Vec::new();
    let mut jac_eq_coords = Vec::new();
    let mut jac_ineq_coords = Vec::new();
    let mut row = 0;
    for (_, r, _) in &eq {
        collect_jac(r, row, &mut jac_eq_coords);
        row += r.spec.instances.len();
    }
    let m_e = row;
    row = 0;
    for (_, r, kind) in &ineq {
        collect_jac(r, row, &mut jac_ineq_coords);
        let m = r.spec.instances.len();
        row += m;
        let (lo, hi) = match *kind {
            ConstraintKind::Ranged { tau } => (-tau, tau),
            _ => (0.0, f64::INFINITY),
        };
        slack_lower.extend(std::iter::repeat_n(lo, m));
        slack_upper.extend(std::iter::repeat_n(hi, m));
    }
    let m_i = row;

    let (jac_eq, jac_eq_index) = dedup_pattern(m_e, n, jac_eq_coords);
    let (jac_ineq, jac_ineq_index) = dedup_pattern(m_i, n, jac_ineq_coords);
    let (hess, hess_index) = dedup_pattern(n, n, hess_coords);

    let objectives = objectives
        .into_iter()
        .map(|(id, r)| finish(id, r, 0, true, None, &hess_index))
        .collect();
    let mut constraints = Vec::new();
    let mut row = 0;
    for (id, r, _) in eq {
        let m = r.spec.instances.len();
        constraints.push(finish(id, r, row, true, Some(&jac_eq_index), &hess_index));
        row += m;
    }
    row = 0;
    for (id, r, _) in ineq {
        let m = r.spec.instances.len();
        constraints.push(finish(id, r, row, false, Some(&jac_ineq_index), &hess_index));
        row += m;
    }

    Ok(CompiledModel {
        n,
        m_e,
        m_i,
        blocks,
        x_lower,
        x_upper,
        x_start,
        params: builder.params.iter().map(|p| p.1).collect(),
        param_names: builder.params.iter().map(|p| p.0.clone()).collect(),
        slack_lower,
        slack_upper,
        objectives,
        constraints,
        jac_eq: Arc::new(jac_eq),
        jac_ineq: Arc::new(jac_ineq),
        hess: Arc::new(hess),
        source: builder.clone(),
    })
}

fn hess_coord(a: usize, b: usize) -> (usize, usize) {
    (a.max(b), a.min(b))
}

fn collect_hess(r: &Resolved, out: &mut Vec<(usize, usize)>) {
    let w = r.template.n_locals();
    for k in 0..r.spec.instances.len() {
        let vars = &r.vars[k * w..(k + 1) * w];
        for &(a, b) in &r.template.hess_pairs {
            out.push(hess_coord(vars[a], vars[b]));
        }
    }
}

fn collect_jac(r: &Resolved, row0: usize, out: &mut Vec<(usize, usize)>) {
    let w = r.template.n_locals();
    for k in 0..r.spec.instances.len() {
        let vars = &r.vars[k * w..(k + 1) * w];
        for &l in &r.template.jac_locals {
            out.push((row0 + k, vars[l]));
        }
    }
}

fn dedup_pattern(nrows: usize, ncols: usize, mut coords: Vec<(usize, usize)>) -> (SparsePattern, HashMap<(usize, usize), usize>) {
    coords.sort_unstable_by_key(|&(r, c)| (c, r));
    coords.dedup();
    let index = coords.iter().enumerate().map(|(k, &rc)| (rc, k)).collect();
    let (rows, cols) = coords.into_iter().unzip();
    (SparsePattern::new(nrows, ncols, rows, cols).expect("coordinates checked during resolution"), index)
}

fn finish(
    id: usize,
    r: Resolved,
    row_offset: usize,
    equality: bool,
    jac_index: Option<&HashMap<(usize, usize), usize>>,
    hess_index: &HashMap<(usize, usize), usize>,
) -> CompiledPattern {
    let w = r.template.n_locals();
    let m = r.spec.instances.len();
    let mut jac_slots = Vec::new();
    let mut hess_slots = Vec::with_capacity(m * r.template.hess_pairs.len());
    let mut hess_scale = Vec::with_capacity(m * r.template.hess_pairs.len());
    for k in 0..m {
        let vars = &r.vars[k * w..(k + 1) * w];
        if let Some(ji) = jac_index {
            for &l in &r.template.jac_locals {
                jac_slots.push(ji[&(row_offset + k, vars[l])]);
            }
        }
        for &(a, b) in &r.template.hess_pairs {
            let (ga, gb) = (vars[a], vars[b]);
            hess_slots.push(hess_index[&hess_coord(ga, gb)]);
            hess_scale.push(if a != b && ga == gb { 2.0 } else { 1.0 });
        }
    }
    let width = r.spec.instances.data_width();
    let data = (0..m).flat_map(|k| r.spec.instances.data(k).to_vec()).collect();
    CompiledPattern {
        id,
        name: r.spec.name.clone(),
        template: r.template,
        n_instances: m,
        data_width: width,
        data,
        vars: r.vars,
        row_offset,
        equality,
        jac_slots,
        hess_slots,
        hess_scale,
    }
}

impl CompiledModel {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m_e(&self) -> usize {
        self.m_e
    }

    pub fn m_i(&self) -> usize {
        self.m_i
    }

    pub fn blocks(&self) -> &[BlockInfo] {
        &self.blocks
    }

    /// Flattened index of `block[coords]` (row-major within the block).
    pub fn var_index(&self, block: super::BlockId, coords: &[usize]) -> usize {
        let b = &self.blocks[block.0];
        let mut flat = 0;
        for (&c, &d) in coords.iter().zip(&b.dims) {
            assert!(c < d, "coordinate {c} out of range for block {}", b.name);
            flat = flat * d + c;
        }
        b.offset + flat
    }

    pub fn lower_bounds(&self) -> &[f64] {
        &self.x_lower
    }

    pub fn upper_bounds(&self) -> &[f64] {
        &self.x_upper
    }

    pub fn start(&self) -> &[f64] {
        &self.x_start
    }

    pub fn slack_lower(&self) -> &[f64] {
        &self.slack_lower
    }

    pub fn slack_upper(&self) -> &[f64] {
        &self.slack_upper
    }

    pub fn parameters(&self) -> impl Iterator<Item = (&str, f64)> {
        self.param_names.iter().map(String::as_str).zip(self.params.iter().copied())
    }

    /// Updates a parameter value; sparsity is unaffected.
    pub fn set_parameter(&mut self, p: super::ParamId, value: f64) {
        self.params[p.0] = value;
        self.source.params[p.0].1 = value;
    }

    pub fn jacobian_eq_pattern(&self) -> &Arc<SparsePattern> {
        &self.jac_eq
    }

    pub fn jacobian_ineq_pattern(&self) -> &Arc<SparsePattern> {
        &self.jac_ineq
    }

    /// Lower triangle (`row >= col`) of the Hessian of the Lagrangian.
    pub fn hessian_pattern(&self) -> &Arc<SparsePattern> {
        &self.hess
    }

    pub fn builder(&self) -> &ModelBuilder {
        &self.source
    }

    /// Number of templates (objective and constraint patterns).
    pub fn n_patterns(&self) -> usize {
        self.objectives.len() + self.constraints.len()
    }

    fn pattern(&self, id: usize) -> Option<&CompiledPattern> {
        self.objectives.iter().chain(&self.constraints).find(|p| p.id == id)
    }

    pub fn pattern_name(&self, id: usize) -> Option<&str> {
        self.pattern(id).map(|p| p.name.as_str())
    }

    pub fn pattern_instances(&self, id: usize) -> usize {
        self.pattern(id).map_or(0, |p| p.n_instances)
    }

    /// Global variables an instance is allowed to read.
    pub fn instance_variables(&self, id: usize, instance: usize) -> Vec<usize> {
        let p = self.pattern(id).expect("unknown pattern");
        let mut v = p.instance_vars(instance).to_vec();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Evaluates one instance through a recording accessor and returns the
    /// sorted set of global variables actually read.
    pub fn trace_instance_reads(&self, id: usize, instance: usize, x: &[f64]) -> Vec<usize> {
        let p = self.pattern(id).expect("unknown pattern");
        let mut reads = Vec::new();
        let local: Vec<f64> = p
            .instance_vars(instance)
            .iter()
            .map(|&g| {
                reads.push(g);
                x[g]
            })
            .collect();
        let mut s = p.template.scratch();
        let _ = p.template.value(&local, &self.params, p.instance_data(instance), &mut s);
        reads.sort_unstable();
        reads.dedup();
        reads
    }

    fn check_x(&self, x: &[f64]) -> Result<(), EvalError> {
        if x.len() != self.n {
            return Err(EvalError::Dimension(format!("x has length {}, model has n = {}", x.len(), self.n)));
        }
        Ok(())
    }

    fn gather(p: &CompiledPattern, k: usize, x: &[f64], buf: &mut Vec<f64>) {
        buf.clear();
        buf.extend(p.instance_vars(k).iter().map(|&g| x[g]));
    }

    pub fn eval_objective(&self, x: &[f64]) -> Result<f64, EvalError> {
        self.check_x(x)?;
        let mut f = 0.0;
        let mut buf = Vec::new();
        for p in &self.objectives {
            let mut s = p.template.scratch();
            for k in 0..p.n_instances {
                Self::gather(p, k, x, &mut buf);
                f += p
                    .template
                    .value(&buf, &self.params, p.instance_data(k), &mut s)
                    .ok_or_else(|| EvalError::non_finite(p, k))?;
            }
        }
        Ok(f)
    }

    pub fn eval_gradient(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut g = vec![0.0; self.n];
        self.eval_objective_gradient(x, &mut g)?;
        Ok(g)
    }

    /// Writes `∇f(x)` into `grad` and returns `f(x)`.
    pub fn eval_objective_gradient(&self, x: &[f64], grad: &mut [f64]) -> Result<f64, EvalError> {
        self.check_x(x)?;
        grad.iter_mut().for_each(|v| *v = 0.0);
        let mut f = 0.0;
        let mut buf = Vec::new();
        for p in &self.objectives {
            let mut s = p.template.scratch();
            let mut lg = vec![0.0; p.template.n_locals()];
            for k in 0..p.n_instances {
                Self::gather(p, k, x, &mut buf);
                f += p
                    .template
                    .gradient(&buf, &self.params, p.instance_data(k), &mut s, &mut lg)
                    .ok_or_else(|| EvalError::non_finite(p, k))?;
                for (&gv, &l) in p.instance_vars(k).iter().zip(&lg) {
                    grad[gv] += l;
                }
            }
        }
        Ok(f)
    }

    /// Equality residuals `g(x)` and inequality values `h(x)`.
    pub fn eval_constraints(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>), EvalError> {
        let mut g = vec![0.0; self.m_e];
        let mut h = vec![0.0; self.m_i];
        self.eval_constraints_into(x, &mut g, &mut h)?;
        Ok((g, h))
    }

    pub fn eval_constraints_into(&self, x: &[f64], g: &mut [f64], h: &mut [f64]) -> Result<(), EvalError> {
        self.check_x(x)?;
        let mut buf = Vec::new();
        for p in &self.constraints {
            let out: &mut [f64] = if p.equality { &mut *g } else { &mut *h };
            let mut s = p.template.scratch();
            for k in 0..p.n_instances {
                Self::gather(p, k, x, &mut buf);
                out[p.row_offset + k] = p
                    .template
                    .value(&buf, &self.params, p.instance_data(k), &mut s)
                    .ok_or_else(|| EvalError::non_finite(p, k))?;
            }
        }
        Ok(())
    }

    /// Values of `G = ∇g` and `H = ∇h` on their fixed patterns.
    pub fn eval_jacobians(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>), EvalError> {
        let mut gv = vec![0.0; self.jac_eq.nnz()];
        let mut hv = vec![0.0; self.jac_ineq.nnz()];
        self.eval_jacobians_into(x, &mut gv, &mut hv)?;
        Ok((gv, hv))
    }

    pub fn eval_jacobians_into(&self, x: &[f64], gv: &mut [f64], hv: &mut [f64]) -> Result<(), EvalError> {
        self.check_x(x)?;
        gv.iter_mut().for_each(|v| *v = 0.0);
        hv.iter_mut().for_each(|v| *v = 0.0);
        let mut buf = Vec::new();
        for p in &self.constraints {
            let out: &mut [f64] = if p.equality { &mut *gv } else { &mut *hv };
            let mut s = p.template.scratch();
            let mut lg = vec![0.0; p.template.n_locals()];
            let nj = p.template.jac_locals.len();
            for k in 0..p.n_instances {
                Self::gather(p, k, x, &mut buf);
                p.template
                    .gradient(&buf, &self.params, p.instance_data(k), &mut s, &mut lg)
                    .ok_or_else(|| EvalError::non_finite(p, k))?;
                for (j, &l) in p.template.jac_locals.iter().enumerate() {
                    out[p.jac_slots[k * nj + j]] += lg[l];
                }
            }
        }
        Ok(())
    }

    /// Lower-triangle values of `σ∇²f + Σ y_j ∇²g_j + Σ z_i ∇²h_i`.
    pub fn eval_hessian_lagrangian(&self, x: &[f64], y: &[f64], z: &[f64], sigma: f64) -> Result<Vec<f64>, EvalError> {
        let mut out = vec![0.0; self.hess.nnz()];
        self.eval_hessian_lagrangian_into(x, y, z, sigma, &mut out)?;
        Ok(out)
    }

    pub fn eval_hessian_lagrangian_into(
        &self,
        x: &[f64],
        y: &[f64],
        z: &[f64],
        sigma: f64,
        out: &mut [f64],
    ) -> Result<(), EvalError> {
        self.check_x(x)?;
        if y.len() != self.m_e || z.len() != self.m_i {
            return Err(EvalError::Dimension(format!(
                "multipliers of length ({}, {}), model has ({}, {})",
                y.len(),
                z.len(),
                self.m_e,
                self.m_i
            )));
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut buf = Vec::new();
        let mut run = |p: &CompiledPattern, weight_of: &dyn Fn(usize) -> f64| -> Result<(), EvalError> {
            let np = p.template.hess_pairs.len();
            if np == 0 {
                return Ok(());
            }
            let mut s: Scratch = p.template.scratch();
            let mut local = vec![0.0; np];
            for k in 0..p.n_instances {
                let w = weight_of(k);
                if w == 0.0 {
                    continue;
                }
                Self::gather(p, k, x, &mut buf);
                if !p.template.hessian(&buf, &self.params, p.instance_data(k), w, &mut s, &mut local) {
                    return Err(EvalError::non_finite(p, k));
                }
                for j in 0..np {
                    out[p.hess_slots[k * np + j]] += p.hess_scale[k * np + j] * local[j];
                }
            }
            Ok(())
        };
        for p in &self.objectives {
            run(p, &|_| sigma)?;
        }
        for p in &self.constraints {
            let mult = if p.equality { y } else { z };
            let off = p.row_offset;
            run(p, &|k| mult[off + k])?;
        }
        Ok(())
    }

    /// Same model with every equality family turned into ranged rows
    /// `-τ <= g(x) <= τ`; families keep their declaration order.
    pub fn with_relaxed_equalities(&self, tau: f64) -> Result<CompiledModel, CompileError> {
        if !(tau > 0.0) {
            return Err(CompileError::Dimension(format!("relaxation parameter must be positive, got {tau}")));
        }
        let mut b = self.source.clone();
        for c in &mut b.constraints {
            if c.kind == ConstraintKind::Equality {
                c.kind = ConstraintKind::Ranged { tau };
            }
        }
        compile(&b)
    }
}

impl EvalError {
    fn non_finite(p: &CompiledPattern, instance: usize) -> Self {
        EvalError::NonFinite { pattern: p.id, name: p.name.clone(), instance }
    }
}
