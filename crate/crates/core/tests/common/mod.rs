//! Independent oracles shared by the integration tests: dense KKT systems
//! assembled entry by entry, an eigenvalue inertia count, forward-mode dual
//! numbers and a loop transcription of the distillation model.
#![allow(dead_code)]

use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

use condensed_ipm::distillation::{DistillationModel, DistillationParams};
use condensed_ipm::expr::{compile, CompiledModel, ConstraintKind, Expr, IndexTerm, Instances, ModelBuilder};
use condensed_ipm::kkt::{KktInputs, Step};
use condensed_ipm::sparse::{CooMatrix, SparsePattern};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

pub fn coo(rows: &[Vec<f64>], ncols: usize, lower_only: bool) -> CooMatrix {
    let (mut r, mut c, mut v) = (vec![], vec![], vec![]);
    for (i, row) in rows.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            if x != 0.0 && (!lower_only || i >= j) {
                r.push(i);
                c.push(j);
                v.push(x);
            }
        }
    }
    let p = SparsePattern::new(rows.len(), ncols, r, c).unwrap();
    CooMatrix::new(Arc::new(p), v).unwrap()
}

/// A Newton system held as dense rows.
#[derive(Debug, Clone)]
pub struct DenseKkt {
    pub w: Vec<Vec<f64>>,
    pub g: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
    pub d_s: Vec<f64>,
    pub r1: Vec<f64>,
    pub r2: Vec<f64>,
    pub r3: Vec<f64>,
    pub r4: Vec<f64>,
}

impl DenseKkt {
    pub fn n(&self) -> usize {
        self.w.len()
    }

    pub fn inputs(&self) -> KktInputs {
        let n = self.n();
        KktInputs {
            w: coo(&self.w, n, true),
            w_diag: vec![0.0; n],
            g: coo(&self.g, n, false),
            h: coo(&self.h, n, false),
            d_s: self.d_s.clone(),
            r1: self.r1.clone(),
            r2: self.r2.clone(),
            r3: self.r3.clone(),
            r4: self.r4.clone(),
            delta_x: 0.0,
            delta_c: 0.0,
        }
    }

    /// Unregularized augmented matrix ordered `(x, s, y, z)`.
    pub fn augmented(&self) -> DMatrix<f64> {
        let (n, me, mi) = (self.n(), self.g.len(), self.h.len());
        let dim = n + 2 * mi + me;
        let (os, oy, oz) = (n, n + mi, n + mi + me);
        let mut a = DMatrix::zeros(dim, dim);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = self.w[i][j];
            }
        }
        for k in 0..mi {
            a[(os + k, os + k)] = self.d_s[k];
            a[(os + k, oz + k)] = 1.0;
            a[(oz + k, os + k)] = 1.0;
            for j in 0..n {
                a[(oz + k, j)] = self.h[k][j];
                a[(j, oz + k)] = self.h[k][j];
            }
        }
        for k in 0..me {
            for j in 0..n {
                a[(oy + k, j)] = self.g[k][j];
                a[(j, oy + k)] = self.g[k][j];
            }
        }
        a
    }

    /// `K = W + Hᵀ D_s H`.
    pub fn condensed(&self) -> DMatrix<f64> {
        let n = self.n();
        let w = DMatrix::from_fn(n, n, |i, j| self.w[i][j]);
        let mi = self.h.len();
        if mi == 0 {
            return w;
        }
        let h = DMatrix::from_fn(mi, n, |i, j| self.h[i][j]);
        let d = DMatrix::from_diagonal(&DVector::from_vec(self.d_s.clone()));
        w + h.transpose() * d * h
    }

    /// `[K Gᵀ; G 0]`.
    pub fn condensed_kkt(&self) -> DMatrix<f64> {
        let (n, me) = (self.n(), self.g.len());
        let k = self.condensed();
        DMatrix::from_fn(n + me, n + me, |i, j| match (i < n, j < n) {
            (true, true) => k[(i, j)],
            (false, true) => self.g[i - n][j],
            (true, false) => self.g[j - n][i],
            _ => 0.0,
        })
    }

    /// Solution of the augmented system by dense LU.
    pub fn oracle_step(&self) -> Step {
        let (n, me, mi) = (self.n(), self.g.len(), self.h.len());
        let rhs: Vec<f64> = self.r1.iter().chain(&self.r2).chain(&self.r3).chain(&self.r4).map(|v| -v).collect();
        let x = self.augmented().lu().solve(&DVector::from_vec(rhs)).expect("nonsingular oracle system");
        let x = x.as_slice();
        Step {
            dx: x[..n].to_vec(),
            ds: x[n..n + mi].to_vec(),
            dy: x[n + mi..n + mi + me].to_vec(),
            dz: x[n + mi + me..].to_vec(),
        }
    }
}

/// `(positive, zero, negative)` eigenvalue counts of a symmetric matrix.
pub fn eigen_inertia(a: &DMatrix<f64>) -> (usize, usize, usize) {
    let eig = a.clone().symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let tol = 1e-10 * scale;
    let mut c = (0, 0, 0);
    for &v in eig.eigenvalues.iter() {
        if v > tol {
            c.0 += 1;
        } else if v < -tol {
            c.2 += 1;
        } else {
            c.1 += 1;
        }
    }
    c
}

/// Random system with full-row-rank `G`. With `convex` the Hessian is
/// diagonally dominant; otherwise its diagonal may be negative.
pub fn random_kkt(rng: &mut ChaCha8Rng, n: usize, me: usize, mi: usize, convex: bool) -> DenseKkt {
    assert!(me <= n);
    let mut w = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..i {
            if rng.random_bool(0.4) {
                let v: f64 = rng.random_range(-1.0..1.0);
                w[i][j] = v;
                w[j][i] = v;
            }
        }
        w[i][i] = if convex { n as f64 + rng.random_range(0.5..1.5) } else { rng.random_range(-2.0..3.0) };
    }
    let mut g = vec![vec![0.0; n]; me];
    for (k, row) in g.iter_mut().enumerate() {
        row[k] = rng.random_range(1.0..3.0);
        for v in row.iter_mut().skip(me) {
            if rng.random_bool(0.5) {
                *v = rng.random_range(-1.0..1.0);
            }
        }
    }
    let mut h = vec![vec![0.0; n]; mi];
    for row in h.iter_mut() {
        for v in row.iter_mut() {
            if rng.random_bool(0.5) {
                *v = rng.random_range(-1.0..1.0);
            }
        }
    }
    let d_s = (0..mi).map(|_| rng.random_range(0.1..10.0)).collect();
    let mut vec_of = |k: usize| (0..k).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
    let (r1, r2, r3, r4) = (vec_of(n), vec_of(mi), vec_of(me), vec_of(mi));
    DenseKkt { w, g, h, d_s, r1, r2, r3, r4 }
}

/// Forward-mode dual number carrying one directional derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub d: f64,
}

pub trait Scalar:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    fn c(v: f64) -> Self;
}

impl Scalar for f64 {
    fn c(v: f64) -> Self {
        v
    }
}

impl Scalar for Dual {
    fn c(v: f64) -> Self {
        Dual { v, d: 0.0 }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual { v: self.v + o.v, d: self.d + o.d }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual { v: self.v - o.v, d: self.d - o.d }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual { v: self.v * o.v, d: self.d * o.v + self.v * o.d }
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        Dual { v: self.v / o.v, d: (self.d * o.v - self.v * o.d) / (o.v * o.v) }
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual { v: -self.v, d: -self.d }
    }
}

/// Objective and equality rows of the distillation model written as plain
/// loops, in the model's row order.
pub fn distillation_loops<T: Scalar>(dm: &DistillationModel, x: &[T]) -> (T, Vec<T>) {
    let p: &DistillationParams = &dm.params;
    let n = dm.horizon_steps;
    let trays = p.trays;
    let f = p.feed_tray;
    let c = T::c;
    let xv = |tray: usize, t: usize| x[dm.x(tray, t)];
    let yv = |tray: usize, t: usize| x[dm.y(tray, t)];
    let u = |t: usize| x[dm.u(t)];
    let l = |t: usize| x[dm.liquid(t)];
    let v = |t: usize| x[dm.vapor(t)];
    let inv_dt = c(n as f64 / p.horizon);
    let (d, feed, alpha) = (c(p.distillate_flow), c(p.feed_flow), c(p.alpha));
    let xbar = p.initial_profile.as_ref().expect("resolved profile");

    let mut obj = c(0.0);
    for t in 1..=n {
        let e = xv(1, t) - c(p.x1_setpoint);
        let r = u(t) - c(p.u_setpoint);
        obj = obj + c(p.gamma) * e * e + c(p.rho) * r * r;
    }

    let mut g = Vec::new();
    for tray in 1..=trays {
        g.push(xv(tray, 0) - c(xbar[tray - 1]));
    }
    for tray in 1..=trays {
        for t in 0..=n {
            g.push(yv(tray, t) - alpha * xv(tray, t) / (c(1.0) + (alpha - c(1.0)) * xv(tray, t)));
        }
    }
    for t in 0..=n {
        g.push(l(t) - u(t) * d);
    }
    for t in 0..=n {
        g.push(v(t) - l(t) - d);
    }
    let xdot = |tray: usize, t: usize| (xv(tray, t) - xv(tray, t - 1)) * inv_dt;
    let m_tray = c(p.holdup_tray);
    for t in 1..=n {
        g.push(xdot(1, t) - v(t) * (yv(2, t) - xv(1, t)) / c(p.holdup_condenser));
    }
    for tray in 2..f {
        for t in 1..=n {
            let flow = l(t) * (xv(tray - 1, t) - xv(tray, t)) - v(t) * (yv(tray, t) - yv(tray + 1, t));
            g.push(xdot(tray, t) - flow / m_tray);
        }
    }
    for t in 1..=n {
        let flow = feed * c(p.feed_composition) + l(t) * xv(f - 1, t)
            - (feed + l(t)) * xv(f, t)
            - v(t) * (yv(f, t) - yv(f + 1, t));
        g.push(xdot(f, t) - flow / m_tray);
    }
    for tray in f + 1..trays {
        for t in 1..=n {
            let flow = (feed + l(t)) * (xv(tray - 1, t) - xv(tray, t)) - v(t) * (yv(tray, t) - yv(tray + 1, t));
            g.push(xdot(tray, t) - flow / m_tray);
        }
    }
    for t in 1..=n {
        let flow = (feed + l(t)) * xv(trays - 1, t) - (feed - d) * xv(trays, t) - v(t) * yv(trays, t);
        g.push(xdot(trays, t) - flow / c(p.holdup_reboiler));
    }
    (obj, g)
}

/// Gradient of the objective and the dense equality Jacobian of the loop
/// transcription, one forward sweep per variable.
pub fn distillation_loop_derivatives(dm: &DistillationModel, x: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = x.len();
    let mut grad = vec![0.0; n];
    let mut jac: Vec<Vec<f64>> = Vec::new();
    let mut xd: Vec<Dual> = x.iter().map(|&v| Dual::c(v)).collect();
    for j in 0..n {
        xd[j].d = 1.0;
        let (f, g) = distillation_loops(dm, &xd);
        xd[j].d = 0.0;
        grad[j] = f.d;
        if jac.is_empty() {
            jac = vec![vec![0.0; n]; g.len()];
        }
        for (i, gi) in g.iter().enumerate() {
            jac[i][j] = gi.d;
        }
    }
    (grad, jac)
}

/// Dense lower-left-mirrored view of a coordinate matrix.
pub fn dense_of(m: &CooMatrix, symmetric_lower: bool) -> Vec<Vec<f64>> {
    let mut d = vec![vec![0.0; m.ncols()]; m.nrows()];
    for ((r, c), v) in m.pattern.iter().zip(&m.values) {
        d[r][c] += v;
        if symmetric_lower && r != c {
            d[c][r] += v;
        }
    }
    d
}

/// Small synthetic models exercising every operator, shifted indices,
/// inequality and ranged rows and bounds.
pub fn synthetic_models() -> Vec<(&'static str, CompiledModel)> {
    let inf = f64::INFINITY;
    let mut out = Vec::new();

    // chained Rosenbrock
    let mut b = ModelBuilder::new();
    let x = b.add_variables("x", &[6], -inf, inf, 0.5).unwrap();
    let xi = Expr::var(x, &[IndexTerm::slot(0)]);
    let xn = Expr::var(x, &[IndexTerm::shifted(0, 1)]);
    b.add_objective("rosen", 100.0 * (xn - xi.clone().square()).square() + (1.0 - xi).square(), Instances::range(0, 4));
    out.push(("rosenbrock", compile(&b).unwrap()));

    // rational terms with parameters and data
    let mut b = ModelBuilder::new();
    let x = b.add_variables("x", &[4], 0.1, 10.0, 1.0).unwrap();
    let k = Expr::param(b.add_parameter("k", 1.7));
    let v = |i: usize| Expr::var(x, &[IndexTerm::Fixed(i)]);
    b.add_objective("rat", v(0) / (1.0 + v(1).square()) + k.clone() * v(2).recip() * v(3), Instances::range(0, 0));
    let xs = Expr::var(x, &[IndexTerm::slot(0)]);
    b.add_constraints(
        "scaled",
        Expr::data(0) * xs.clone() * xs.clone() - Expr::data(1) / xs,
        Instances::range(0, 3).with_data(2, vec![1.0, 2.0, 0.5, 1.0, 2.0, 0.3, 1.5, 0.1]),
        ConstraintKind::Equality,
    );
    out.push(("rational", compile(&b).unwrap()));

    // two-dimensional block with inequality rows
    let mut b = ModelBuilder::new();
    let x = b.add_variables("grid", &[3, 4], -inf, inf, 0.2).unwrap();
    let here = Expr::var(x, &[IndexTerm::slot(0), IndexTerm::slot(1)]);
    let right = Expr::var(x, &[IndexTerm::slot(0), IndexTerm::shifted(1, 1)]);
    b.add_objective("smooth", (right.clone() - here.clone()).square() * (1.0 + here.clone().square()), Instances::product(&[(0, 2), (0, 2)]));
    b.add_constraints("cap", here.clone() * right - 2.0, Instances::product(&[(0, 2), (0, 2)]), ConstraintKind::Inequality);
    out.push(("grid", compile(&b).unwrap()));

    // ranged rows and two blocks
    let mut b = ModelBuilder::new();
    let a = b.add_variables("a", &[3], -5.0, 5.0, 1.0).unwrap();
    let c = b.add_variables("c", &[3], -inf, inf, -0.5).unwrap();
    let av = Expr::var(a, &[IndexTerm::slot(0)]);
    let cv = Expr::var(c, &[IndexTerm::slot(0)]);
    b.add_objective("mix", av.clone() * cv.clone() * cv.clone() - av.clone().square().recip() * 0.1, Instances::range(0, 2));
    b.add_constraints("link", av.clone() - cv.clone().square() + 0.5, Instances::range(0, 2), ConstraintKind::Ranged { tau: 0.25 });
    b.add_constraints("prod", -(av * cv), Instances::range(0, 2), ConstraintKind::Equality);
    out.push(("ranged", compile(&b).unwrap()));

    // the same variable appearing in several local slots
    let mut b = ModelBuilder::new();
    let x = b.add_variables("x", &[3], -inf, inf, 0.7).unwrap();
    let p = Expr::var(x, &[IndexTerm::slot(0)]);
    let q = Expr::var(x, &[IndexTerm::slot(1)]);
    b.add_objective("pair", p.clone() * q.clone() * q.clone() + p.clone().square() / (2.0 + q.clone().square()), Instances::new(2, vec![vec![0, 0], vec![0, 1], vec![2, 1], vec![2, 2]]));
    b.add_constraints("pair_c", p * q - 0.3, Instances::new(2, vec![vec![1, 1], vec![0, 2]]), ConstraintKind::Equality);
    out.push(("aliased", compile(&b).unwrap()));

    out
}

/// Random point inside the variable box (clamped to a moderate range).
pub fn random_point(rng: &mut ChaCha8Rng, m: &CompiledModel, spread: f64) -> Vec<f64> {
    (0..m.n())
        .map(|i| {
            let lo = m.lower_bounds()[i].max(-2.0);
            let hi = m.upper_bounds()[i].min(2.0);
            let mid = m.start()[i].clamp(lo, hi);
            (mid + spread * rng.random_range(-1.0..1.0)).clamp(lo + 1e-3 * (hi - lo), hi - 1e-3 * (hi - lo))
        })
        .collect()
}

/// Worst `|ad − fd| / max(1, |fd|)` over gradient, Jacobians and the
/// Hessian of the Lagrangian.
#[derive(Debug, Default)]
pub struct FdErrors {
    pub gradient: f64,
    pub jacobian: f64,
    pub hessian: f64,
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn step(x: f64) -> f64 {
    1e-6 * x.abs().max(1.0)
}

fn lagrangian_gradient(m: &CompiledModel, x: &[f64], y: &[f64], z: &[f64]) -> Vec<f64> {
    let mut g = m.eval_gradient(x).unwrap();
    let (gv, hv) = m.eval_jacobians(x).unwrap();
    CooMatrix::new(m.jacobian_eq_pattern().clone(), gv).unwrap().mul_t_add(y, &mut g);
    CooMatrix::new(m.jacobian_ineq_pattern().clone(), hv).unwrap().mul_t_add(z, &mut g);
    g
}

pub fn fd_errors(m: &CompiledModel, x: &[f64], y: &[f64], z: &[f64]) -> FdErrors {
    let n = m.n();
    let mut e = FdErrors::default();
    let grad = m.eval_gradient(x).unwrap();
    let (gv, hv) = m.eval_jacobians(x).unwrap();
    let jg = dense_of(&CooMatrix::new(m.jacobian_eq_pattern().clone(), gv).unwrap(), false);
    let jh = dense_of(&CooMatrix::new(m.jacobian_ineq_pattern().clone(), hv).unwrap(), false);
    let hess = dense_of(
        &CooMatrix::new(m.hessian_pattern().clone(), m.eval_hessian_lagrangian(x, y, z, 1.0).unwrap()).unwrap(),
        true,
    );
    for j in 0..n {
        let h = step(x[j]);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[j] += h;
        xm[j] -= h;
        let fd = (m.eval_objective(&xp).unwrap() - m.eval_objective(&xm).unwrap()) / (2.0 * h);
        e.gradient = e.gradient.max(rel(grad[j], fd));

        let (gp, hp) = m.eval_constraints(&xp).unwrap();
        let (gm, hm) = m.eval_constraints(&xm).unwrap();
        for i in 0..m.m_e() {
            e.jacobian = e.jacobian.max(rel(jg[i][j], (gp[i] - gm[i]) / (2.0 * h)));
        }
        for i in 0..m.m_i() {
            e.jacobian = e.jacobian.max(rel(jh[i][j], (hp[i] - hm[i]) / (2.0 * h)));
        }

        let lp = lagrangian_gradient(m, &xp, y, z);
        let lm = lagrangian_gradient(m, &xm, y, z);
        for i in 0..n {
            e.hessian = e.hessian.max(rel(hess[i][j], (lp[i] - lm[i]) / (2.0 * h)));
        }
    }
    e
}

impl FdErrors {
    pub fn worst(&self) -> f64 {
        self.gradient.max(self.jacobian).max(self.hessian)
    }
}
