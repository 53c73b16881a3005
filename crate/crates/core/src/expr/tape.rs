//! Per-template tapes with first derivatives by reverse sweep and second
//! derivatives by forward-over-reverse, both restricted to the template's
//! local variables.

use std::collections::{BTreeSet, HashMap};

use super::expr::{BinaryOp, Expr, UnaryOp, VarRef};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Op {
    Const(f64),
    Param(usize),
    Data(usize),
    Var(usize),
    Unary(UnaryOp, usize),
    Binary(BinaryOp, usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Key {
    Const(u64),
    Param(usize),
    Data(usize),
    Var(usize),
    Unary(UnaryOp, usize),
    Binary(BinaryOp, usize, usize),
}

/// A compiled expression template: a DAG in topological order whose leaves
/// reference local variable slots, plus its derivative sparsity in local
/// coordinates.
#[derive(Debug, Clone)]
pub struct ExprTemplate {
    pub(crate) ops: Vec<Op>,
    pub(crate) locals: Vec<VarRef>,
    /// local variables the value depends on (sorted)
    pub(crate) jac_locals: Vec<usize>,
    /// nonlinear interactions `(a, b)` with `a >= b`
    pub(crate) hess_pairs: Vec<(usize, usize)>,
    /// `(direction b, [(pair index, a)])` grouped for forward-over-reverse
    hess_by_dir: Vec<(usize, Vec<(usize, usize)>)>,
    pub(crate) params_used: Vec<usize>,
    pub(crate) data_used: Vec<usize>,
    var_node: Vec<usize>,
}

/// Reusable buffers for template evaluation.
#[derive(Debug, Default)]
pub(crate) struct Scratch {
    val: Vec<f64>,
    adj: Vec<f64>,
    tan: Vec<f64>,
    adot: Vec<f64>,
    // first and second partials per op: [pa, pb, paa, pab, pbb]
    part: Vec<[f64; 5]>,
}

impl ExprTemplate {
    pub fn from_expr(expr: &Expr) -> Self {
        let mut ops = Vec::new();
        let mut keys: HashMap<Key, usize> = HashMap::new();
        let mut locals: Vec<VarRef> = Vec::new();
        flatten(expr, &mut ops, &mut keys, &mut locals);

        // dependency sets and nonlinear pairs, propagated in topological order
        let mut dep: Vec<BTreeSet<usize>> = Vec::with_capacity(ops.len());
        let mut pairs: Vec<BTreeSet<(usize, usize)>> = Vec::with_capacity(ops.len());
        let cross = |a: &BTreeSet<usize>, b: &BTreeSet<usize>, out: &mut BTreeSet<(usize, usize)>| {
            for &i in a {
                for &j in b {
                    out.insert((i.max(j), i.min(j)));
                }
            }
        };
        let mut params_used = BTreeSet::new();
        let mut data_used = BTreeSet::new();
        for op in &ops {
            let (d, p) = match *op {
                Op::Const(_) => (BTreeSet::new(), BTreeSet::new()),
                Op::Param(k) => {
                    params_used.insert(k);
                    (BTreeSet::new(), BTreeSet::new())
                }
                Op::Data(k) => {
                    data_used.insert(k);
                    (BTreeSet::new(), BTreeSet::new())
                }
                Op::Var(l) => (BTreeSet::from([l]), BTreeSet::new()),
                Op::Unary(u, a) => {
                    let mut p = pairs[a].clone();
                    if u != UnaryOp::Neg {
                        cross(&dep[a], &dep[a], &mut p);
                    }
                    (dep[a].clone(), p)
                }
                Op::Binary(b, x, y) => {
                    let d: BTreeSet<usize> = dep[x].union(&dep[y]).copied().collect();
                    let mut p: BTreeSet<(usize, usize)> = pairs[x].union(&pairs[y]).copied().collect();
                    match b {
                        BinaryOp::Add | BinaryOp::Sub => {}
                        BinaryOp::Mul => cross(&dep[x], &dep[y], &mut p),
                        BinaryOp::Div => {
                            cross(&dep[x], &dep[y], &mut p);
                            cross(&dep[y], &dep[y], &mut p);
                        }
                    }
                    (d, p)
                }
            };
            dep.push(d);
            pairs.push(p);
        }
        let root = ops.len() - 1;
        let jac_locals: Vec<usize> = dep[root].iter().copied().collect();
        let hess_pairs: Vec<(usize, usize)> = pairs[root].iter().copied().collect();
        let mut by_dir: std::collections::BTreeMap<usize, Vec<(usize, usize)>> = Default::default();
        for (k, &(a, b)) in hess_pairs.iter().enumerate() {
            by_dir.entry(b).or_default().push((k, a));
        }
        let mut var_node = vec![0; locals.len()];
        for (i, op) in ops.iter().enumerate() {
            if let Op::Var(l) = *op {
                var_node[l] = i;
            }
        }
        Self {
            var_node,
            ops,
            locals,
            jac_locals,
            hess_pairs,
            hess_by_dir: by_dir.into_iter().collect(),
            params_used: params_used.into_iter().collect(),
            data_used: data_used.into_iter().collect(),
        }
    }

    pub fn n_locals(&self) -> usize {
        self.locals.len()
    }

    pub(crate) fn scratch(&self) -> Scratch {
        let n = self.ops.len();
        Scratch {
            val: vec![0.0; n],
            adj: vec![0.0; n],
            tan: vec![0.0; n],
            adot: vec![0.0; n],
            part: vec![[0.0; 5]; n],
        }
    }

    /// Forward sweep; returns `false` if any intermediate is non-finite.
    fn forward(&self, x: &[f64], params: &[f64], data: &[f64], s: &mut Scratch, partials: bool) -> bool {
        let mut ok = true;
        for (i, op) in self.ops.iter().enumerate() {
            let v = match *op {
                Op::Const(c) => c,
                Op::Param(k) => params[k],
                Op::Data(k) => data[k],
                Op::Var(l) => x[l],
                Op::Unary(u, a) => {
                    let va = s.val[a];
                    let (v, p) = match u {
                        UnaryOp::Neg => (-va, [-1.0, 0.0, 0.0, 0.0, 0.0]),
                        UnaryOp::Square => (va * va, [2.0 * va, 0.0, 2.0, 0.0, 0.0]),
                        UnaryOp::Recip => {
                            let r = 1.0 / va;
                            (r, [-r * r, 0.0, 2.0 * r * r * r, 0.0, 0.0])
                        }
                    };
                    if partials {
                        s.part[i] = p;
                    }
                    v
                }
                Op::Binary(b, x, y) => {
                    let (va, vb) = (s.val[x], s.val[y]);
                    let (v, p) = match b {
                        BinaryOp::Add => (va + vb, [1.0, 1.0, 0.0, 0.0, 0.0]),
                        BinaryOp::Sub => (va - vb, [1.0, -1.0, 0.0, 0.0, 0.0]),
                        BinaryOp::Mul => (va * vb, [vb, va, 0.0, 1.0, 0.0]),
                        BinaryOp::Div => {
                            let r = 1.0 / vb;
                            let q = va * r;
                            (q, [r, -q * r, 0.0, -r * r, 2.0 * q * r * r])
                        }
                    };
                    if partials {
                        s.part[i] = p;
                    }
                    v
                }
            };
            ok &= v.is_finite();
            s.val[i] = v;
        }
        ok
    }

    /// Value at local variable values `x`, or `None` on a non-finite intermediate.
    pub(crate) fn value(&self, x: &[f64], params: &[f64], data: &[f64], s: &mut Scratch) -> Option<f64> {
        self.forward(x, params, data, s, false).then(|| s.val[self.ops.len() - 1])
    }

    /// Value and gradient with respect to local variables (`grad` has one
    /// entry per local, zero for locals outside `jac_locals`).
    pub(crate) fn gradient(&self, x: &[f64], params: &[f64], data: &[f64], s: &mut Scratch, grad: &mut [f64]) -> Option<f64> {
        if !self.forward(x, params, data, s, true) {
            return None;
        }
        self.reverse(s);
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (i, op) in self.ops.iter().enumerate() {
            if let Op::Var(l) = *op {
                grad[l] += s.adj[i];
            }
        }
        Some(s.val[self.ops.len() - 1])
    }

    fn reverse(&self, s: &mut Scratch) {
        s.adj.iter_mut().for_each(|a| *a = 0.0);
        let root = self.ops.len() - 1;
        s.adj[root] = 1.0;
        for i in (0..=root).rev() {
            let ai = s.adj[i];
            if ai == 0.0 {
                continue;
            }
            let p = s.part[i];
            match self.ops[i] {
                Op::Unary(_, a) => s.adj[a] += ai * p[0],
                Op::Binary(_, a, b) => {
                    s.adj[a] += ai * p[0];
                    s.adj[b] += ai * p[1];
                }
                _ => {}
            }
        }
    }

    /// Hessian entries on `hess_pairs`, scaled by `weight`, written into `out`.
    pub(crate) fn hessian(&self, x: &[f64], params: &[f64], data: &[f64], weight: f64, s: &mut Scratch, out: &mut [f64]) -> bool {
        out.iter_mut().for_each(|o| *o = 0.0);
        if self.hess_pairs.is_empty() {
            return true;
        }
        if !self.forward(x, params, data, s, true) {
            return false;
        }
        self.reverse(s);
        let root = self.ops.len() - 1;
        for (dir, entries) in &self.hess_by_dir {
            for (i, op) in self.ops.iter().enumerate() {
                let t = match *op {
                    Op::Var(l) => {
                        if l == *dir {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    Op::Unary(_, a) => s.part[i][0] * s.tan[a],
                    Op::Binary(_, a, b) => s.part[i][0] * s.tan[a] + s.part[i][1] * s.tan[b],
                    _ => 0.0,
                };
                s.tan[i] = t;
            }
            s.adot.iter_mut().for_each(|a| *a = 0.0);
            for i in (0..=root).rev() {
                let (ai, di) = (s.adj[i], s.adot[i]);
                let p = s.part[i];
                match self.ops[i] {
                    Op::Unary(_, a) => {
                        s.adot[a] += di * p[0] + ai * p[2] * s.tan[a];
                    }
                    Op::Binary(_, a, b) => {
                        let (ta, tb) = (s.tan[a], s.tan[b]);
                        s.adot[a] += di * p[0] + ai * (p[2] * ta + p[3] * tb);
                        s.adot[b] += di * p[1] + ai * (p[3] * ta + p[4] * tb);
                    }
                    _ => {}
                }
            }
            for &(k, a) in entries {
                out[k] = weight * s.adot[self.var_node[a]];
            }
        }
        out.iter().all(|v| v.is_finite())
    }
}

fn flatten(expr: &Expr, ops: &mut Vec<Op>, keys: &mut HashMap<Key, usize>, locals: &mut Vec<VarRef>) -> usize {
    let (key, op) = match expr {
        Expr::Const(c) => (Key::Const(c.to_bits()), Op::Const(*c)),
        Expr::Param(p) => (Key::Param(p.0), Op::Param(p.0)),
        Expr::Data(k) => (Key::Data(*k), Op::Data(*k)),
        Expr::Var(v) => {
            let l = match locals.iter().position(|w| w == v) {
                Some(l) => l,
                None => {
                    locals.push(v.clone());
                    locals.len() - 1
                }
            };
            (Key::Var(l), Op::Var(l))
        }
        Expr::Unary(u, a) => {
            let a = flatten(a, ops, keys, locals);
            (Key::Unary(*u, a), Op::Unary(*u, a))
        }
        Expr::Binary(b, x, y) => {
            let x = flatten(x, ops, keys, locals);
            let y = flatten(y, ops, keys, locals);
            (Key::Binary(*b, x, y), Op::Binary(*b, x, y))
        }
    };
    if let Some(&id) = keys.get(&key) {
        return id;
    }
    ops.push(op);
    keys.insert(key, ops.len() - 1);
    ops.len() - 1
}
