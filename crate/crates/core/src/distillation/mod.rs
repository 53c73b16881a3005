//! Dynamic optimization of a binary distillation column, transcribed by
//! implicit Euler over `N` intervals.
//!
//! Every stage `t = 0..=N` carries `x` (liquid mole fractions, one per tray),
//! `y` (vapor mole fractions), the reflux ratio `u` and the flows `L`, `V`,
//! which gives `(2·trays + 3)(N + 1)` variables (67(N+1) for 32 trays).
//! The stripping flow is substituted as `S = F + L`.
//!
//! Equality rows, in order: initial conditions, vapor-liquid equilibrium for
//! every stage, `L = uD`, `V = L + D`, then the material balances for
//! `t = 1..=N` (condenser, rectification trays, feed tray, stripping trays,
//! reboiler). The only bounds are `u_lower <= u_t <= u_upper`.

mod params;

pub use params::DistillationParams;

use faer::linalg::solvers::Solve;
use faer::Mat;
use thiserror::Error;

use crate::expr::{compile, BlockId, CompileError, CompiledModel, ConstraintKind, Expr, IndexTerm, Instances, ModelBuilder};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BuildError {
    #[error("horizon must have at least one interval (got N = {0})")]
    HorizonTooShort(usize),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("steady-state solve did not converge (residual {0:.3e})")]
    SteadyState(f64),
    #[error(transparent)]
    Compile(#[from] CompileError),
}

/// Compiled distillation instance plus the variable index maps.
#[derive(Debug, Clone)]
pub struct DistillationModel {
    pub model: CompiledModel,
    /// parameters with the initial profile resolved
    pub params: DistillationParams,
    pub horizon_steps: usize,
    x: BlockId,
    y: BlockId,
    u: BlockId,
    l: BlockId,
    v: BlockId,
}

impl DistillationModel {
    /// Global index of `x_{tray,t}`; trays are numbered from 1.
    pub fn x(&self, tray: usize, t: usize) -> usize {
        self.model.var_index(self.x, &[tray - 1, t])
    }

    pub fn y(&self, tray: usize, t: usize) -> usize {
        self.model.var_index(self.y, &[tray - 1, t])
    }

    pub fn u(&self, t: usize) -> usize {
        self.model.var_index(self.u, &[t])
    }

    pub fn liquid(&self, t: usize) -> usize {
        self.model.var_index(self.l, &[t])
    }

    pub fn vapor(&self, t: usize) -> usize {
        self.model.var_index(self.v, &[t])
    }

    /// Variables belonging to stage `t`.
    pub fn stage_variables(&self, t: usize) -> Vec<usize> {
        let trays = self.params.trays;
        let mut v: Vec<usize> = (1..=trays).flat_map(|n| [self.x(n, t), self.y(n, t)]).collect();
        v.extend([self.u(t), self.liquid(t), self.vapor(t)]);
        v
    }

    /// Stage of a global variable index.
    pub fn stage_of(&self, var: usize) -> usize {
        let per = self.horizon_steps + 1;
        let trays = self.params.trays;
        if var < 2 * trays * per {
            var % per
        } else {
            (var - 2 * trays * per) % per
        }
    }
}

pub fn default_params() -> DistillationParams {
    DistillationParams::default()
}

/// `(n, nnz of the condensed matrix)` for the 32-tray column with horizon `n_steps`.
pub fn reference_dimensions(n_steps: usize) -> (usize, usize) {
    (67 * (n_steps + 1), 837 * n_steps + 135)
}

/// Vapor-liquid equilibrium `y = αx / (1 + (α − 1)x)`.
pub fn vle(alpha: f64, x: f64) -> f64 {
    alpha * x / (1.0 + (alpha - 1.0) * x)
}

/// Tray compositions at steady state for a constant reflux ratio `u`.
pub fn steady_state(p: &DistillationParams, u: f64) -> Result<Vec<f64>, BuildError> {
    p.validate()?;
    let t = p.trays;
    let mut x = vec![p.feed_composition; t];
    let (mut r, mut jac) = steady_residual(p, u, &x);
    let mut norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    for _ in 0..100 {
        if norm < 1e-14 {
            break;
        }
        let rhs = Mat::<f64>::from_fn(t, 1, |i, _| -r[i]);
        let dx = jac.partial_piv_lu().solve(&rhs);
        let mut alpha = 1.0;
        loop {
            let trial: Vec<f64> = (0..t).map(|i| x[i] + alpha * dx[(i, 0)]).collect();
            let (rt, jt) = steady_residual(p, u, &trial);
            let nt = rt.iter().map(|v| v * v).sum::<f64>().sqrt();
            if nt < norm || alpha < 1e-8 {
                x = trial;
                r = rt;
                jac = jt;
                norm = nt;
                break;
            }
            alpha *= 0.5;
        }
    }
    if norm < 1e-10 {
        Ok(x)
    } else {
        Err(BuildError::SteadyState(norm))
    }
}

fn steady_residual(p: &DistillationParams, u: f64, x: &[f64]) -> (Vec<f64>, Mat<f64>) {
    let t = p.trays;
    let f = p.feed_tray - 1;
    let a = p.alpha;
    let l = u * p.distillate_flow;
    let v = l + p.distillate_flow;
    let s = p.feed_flow + l;
    let y: Vec<f64> = x.iter().map(|&xi| vle(a, xi)).collect();
    let dy: Vec<f64> = x.iter().map(|&xi| a / (1.0 + (a - 1.0) * xi).powi(2)).collect();
    let mut r = vec![0.0; t];
    let mut j = Mat::<f64>::zeros(t, t);

    r[0] = v * (y[1] - x[0]);
    j[(0, 0)] = -v;
    j[(0, 1)] = v * dy[1];
    for i in 1..t - 1 {
        let flow = if i < f { l } else { s };
        r[i] = flow * (x[i - 1] - x[i]) - v * (y[i] - y[i + 1]);
        j[(i, i - 1)] = if i == f { l } else { flow };
        j[(i, i)] = -flow - v * dy[i];
        j[(i, i + 1)] = v * dy[i + 1];
        if i == f {
            r[i] = p.feed_flow * p.feed_composition + l * x[i - 1] - s * x[i] - v * (y[i] - y[i + 1]);
        }
    }
    let b = t - 1;
    r[b] = s * x[b - 1] - (p.feed_flow - p.distillate_flow) * x[b] - v * y[b];
    j[(b, b - 1)] = s;
    j[(b, b)] = -(p.feed_flow - p.distillate_flow) - v * dy[b];
    (r, j)
}

/// Builds and compiles the instance with horizon `n_steps` (Δt = horizon / N).
pub fn build_distillation(n_steps: usize, params: DistillationParams) -> Result<DistillationModel, BuildError> {
    if n_steps < 1 {
        return Err(BuildError::HorizonTooShort(n_steps));
    }
    params.validate()?;
    let mut params = params;
    let x0 = match &params.initial_profile {
        Some(p) => p.clone(),
        None => steady_state(&params, params.u_setpoint)?,
    };
    params.initial_profile = Some(x0.clone());
    let p = &params;
    let trays = p.trays;
    let f = p.feed_tray - 1;
    let last = n_steps as i64;
    let inf = f64::INFINITY;

    let mut b = ModelBuilder::new();
    let xb = b.add_variables("x", &[trays, n_steps + 1], -inf, inf, 0.0)?;
    let yb = b.add_variables("y", &[trays, n_steps + 1], -inf, inf, 0.0)?;
    let ub = b.add_variables("u", &[n_steps + 1], p.u_lower, p.u_upper, p.u_setpoint)?;
    let lb = b.add_variables("L", &[n_steps + 1], -inf, inf, p.u_setpoint * p.distillate_flow)?;
    let vb = b.add_variables("V", &[n_steps + 1], -inf, inf, (p.u_setpoint + 1.0) * p.distillate_flow)?;
    let per = n_steps + 1;
    b.set_start(xb, x0.iter().flat_map(|&v| std::iter::repeat_n(v, per)).collect())?;
    b.set_start(yb, x0.iter().flat_map(|&v| std::iter::repeat_n(vle(p.alpha, v), per)).collect())?;

    let alpha = Expr::param(b.add_parameter("alpha", p.alpha));
    let dist = Expr::param(b.add_parameter("distillate_flow", p.distillate_flow));
    let feed = Expr::param(b.add_parameter("feed_flow", p.feed_flow));
    let xf = Expr::param(b.add_parameter("feed_composition", p.feed_composition));
    let inv_dt = Expr::param(b.add_parameter("inv_dt", 1.0 / p.dt(n_steps)));
    let gamma = Expr::param(b.add_parameter("gamma", p.gamma));
    let rho = Expr::param(b.add_parameter("rho", p.rho));
    let x1bar = Expr::param(b.add_parameter("x1_setpoint", p.x1_setpoint));
    let ubar = Expr::param(b.add_parameter("u_setpoint", p.u_setpoint));
    let inv_m1 = Expr::param(b.add_parameter("inv_holdup_condenser", 1.0 / p.holdup_condenser));
    let inv_m = Expr::param(b.add_parameter("inv_holdup_tray", 1.0 / p.holdup_tray));
    let inv_mt = Expr::param(b.add_parameter("inv_holdup_reboiler", 1.0 / p.holdup_reboiler));

    use IndexTerm::{Fixed, Slot};
    let s = |slot| IndexTerm::slot(slot);
    let sh = |slot, offset| Slot { slot, offset };
    let x = |tray: IndexTerm, t: IndexTerm| Expr::var(xb, &[tray, t]);
    let y = |tray: IndexTerm, t: IndexTerm| Expr::var(yb, &[tray, t]);
    let stage = |blk: BlockId, t: IndexTerm| Expr::var(blk, &[t]);

    // objective, t = 1..N
    let obj = gamma * (x(Fixed(0), s(0)) - x1bar).square() + rho * (stage(ub, s(0)) - ubar).square();
    b.add_objective("tracking", obj, Instances::range(1, last));

    let eq = ConstraintKind::Equality;
    let init = Instances::range(0, trays as i64 - 1).with_data(1, x0.clone());
    b.add_constraints("initial_condition", x(s(0), Fixed(0)) - Expr::data(0), init, eq);

    let xv = x(s(0), s(1));
    let vle_row = y(s(0), s(1)) - alpha.clone() * xv.clone() / (1.0 + (alpha - 1.0) * xv);
    b.add_constraints("equilibrium", vle_row, Instances::product(&[(0, trays as i64 - 1), (0, last)]), eq);

    b.add_constraints(
        "reflux",
        stage(lb, s(0)) - stage(ub, s(0)) * dist.clone(),
        Instances::range(0, last),
        eq,
    );
    b.add_constraints(
        "vapor",
        stage(vb, s(0)) - stage(lb, s(0)) - dist.clone(),
        Instances::range(0, last),
        eq,
    );

    // balances over t = 1..N, tuple (tray, t) or (t)
    let l_t = |t| stage(lb, t);
    let v_t = |t| stage(vb, t);
    let strip = |t| feed.clone() + stage(lb, t);
    let xdot = |tray: IndexTerm, t: usize| (x(tray, s(t)) - x(tray, sh(t, -1))) * inv_dt.clone();

    let tray0 = Fixed(0);
    let cond = xdot(tray0, 0) - inv_m1 * v_t(s(0)) * (y(Fixed(1), s(0)) - x(tray0, s(0)));
    b.add_constraints("condenser", cond, Instances::range(1, last), eq);

    let rect = xdot(s(0), 1)
        - inv_m.clone()
            * (l_t(s(1)) * (x(sh(0, -1), s(1)) - x(s(0), s(1))) - v_t(s(1)) * (y(s(0), s(1)) - y(sh(0, 1), s(1))));
    b.add_constraints("rectification", rect, Instances::product(&[(1, f as i64 - 1), (1, last)]), eq);

    let (ft, fa, fb) = (Fixed(f), Fixed(f - 1), Fixed(f + 1));
    let feed_row = xdot(ft, 0)
        - inv_m.clone()
            * (feed.clone() * xf + l_t(s(0)) * x(fa, s(0))
                - strip(s(0)) * x(ft, s(0))
                - v_t(s(0)) * (y(ft, s(0)) - y(fb, s(0))));
    b.add_constraints("feed_tray", feed_row, Instances::range(1, last), eq);

    let stripping = xdot(s(0), 1)
        - inv_m * (strip(s(1)) * (x(sh(0, -1), s(1)) - x(s(0), s(1))) - v_t(s(1)) * (y(s(0), s(1)) - y(sh(0, 1), s(1))));
    b.add_constraints(
        "stripping",
        stripping,
        Instances::product(&[(f as i64 + 1, trays as i64 - 2), (1, last)]),
        eq,
    );

    let (rt, ra) = (Fixed(trays - 1), Fixed(trays - 2));
    let reb = xdot(rt, 0)
        - inv_mt
            * (strip(s(0)) * x(ra, s(0)) - (feed - dist) * x(rt, s(0)) - v_t(s(0)) * y(rt, s(0)));
    b.add_constraints("reboiler", reb, Instances::range(1, last), eq);

    let model = compile(&b)?;
    Ok(DistillationModel { model, params, horizon_steps: n_steps, x: xb, y: yb, u: ub, l: lb, v: vb })
}
