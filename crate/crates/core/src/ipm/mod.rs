//! Primal-dual interior-point method with a filter line search.
//!
//! Each iteration solves one Newton system through a [`KktStrategy`],
//! corrects its inertia by regularization when needed, and backtracks along
//! the step until the filter accepts it. The barrier parameter follows a
//! monotone schedule.

mod filter;
mod point;
mod step;

pub use filter::Filter;
pub use point::{kkt_residual, KktResidual, PrimalDualPoint};
pub use step::{
    filter_line_search, fraction_to_boundary, inertia_correction, update_mu, InertiaError, LineSearchOutcome,
    LineSearchParams, Measure, RegularizationState, Regularized,
};

use std::fmt;
use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::expr::CompiledModel;
use crate::kkt::{new_strategy, relax_equalities, KktInputs, KktPatterns, LinearSolverStats, StrategyKind, StrategyOptions};
use crate::sparse::{CooMatrix, DEFAULT_DENSE_CAP};
use point::{initial_point, residual_from, Boxes, Evaluation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// unscaled KKT tolerance
    pub tol: f64,
    pub max_iter: usize,
    pub strategy: StrategyKind,
    /// half-width of the ranges equalities are relaxed into (lifted only)
    pub tau_relax: f64,
    /// HyKKT augmentation
    pub gamma: f64,
    pub mu_init: f64,
    pub kappa_mu: f64,
    pub theta_mu: f64,
    /// barrier subproblem tolerance factor
    pub kappa_eps: f64,
    /// lower bound of the fraction-to-boundary parameter `max(τ_min, 1 − μ)`
    pub tau_min: f64,
    /// relative push of the starting point into its bounds
    pub bound_push: f64,
    /// bound multipliers are kept within a factor `κ_Σ` of `μ/gap`
    pub kappa_sigma: f64,
    pub delta_x_first: f64,
    pub delta_x_growth: f64,
    pub delta_x_decrease: f64,
    pub delta_x_min: f64,
    pub delta_x_max: f64,
    pub delta_c_base: f64,
    pub delta_c_exponent: f64,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub refine_tol: f64,
    pub refine_max_iter: usize,
    pub dense_cap: usize,
    /// keep every accepted iterate in the report (memory heavy)
    pub record_iterates: bool,
    /// write every factorized matrix into this directory
    pub dump_dir: Option<PathBuf>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 3000,
            strategy: StrategyKind::Hykkt,
            tau_relax: 1e-6,
            gamma: 1e7,
            mu_init: 0.1,
            kappa_mu: 0.2,
            theta_mu: 1.5,
            kappa_eps: 10.0,
            tau_min: 0.99,
            bound_push: 1e-2,
            kappa_sigma: 1e10,
            delta_x_first: 1e-4,
            delta_x_growth: 8.0,
            delta_x_decrease: 1.0 / 3.0,
            delta_x_min: 1e-20,
            delta_x_max: 1e40,
            delta_c_base: 1e-8,
            delta_c_exponent: 0.25,
            cg_tol: 1e-10,
            cg_max_iter: 200,
            refine_tol: 1e-10,
            refine_max_iter: 10,
            dense_cap: DEFAULT_DENSE_CAP,
            record_iterates: false,
            dump_dir: None,
        }
    }
}

impl SolverOptions {
    pub fn with_strategy(strategy: StrategyKind) -> Self {
        Self { strategy, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("tol", self.tol),
            ("tau_relax", self.tau_relax),
            ("gamma", self.gamma),
            ("mu_init", self.mu_init),
            ("kappa_eps", self.kappa_eps),
            ("bound_push", self.bound_push),
            ("delta_x_first", self.delta_x_first),
            ("delta_c_base", self.delta_c_base),
            ("cg_tol", self.cg_tol),
            ("refine_tol", self.refine_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !(self.kappa_mu > 0.0 && self.kappa_mu < 1.0) {
            return Err(format!("kappa_mu must lie in (0, 1), got {}", self.kappa_mu));
        }
        if !(self.theta_mu > 1.0 && self.theta_mu < 2.0) {
            return Err(format!("theta_mu must lie in (1, 2), got {}", self.theta_mu));
        }
        if !(self.tau_min > 0.0 && self.tau_min < 1.0) {
            return Err(format!("tau_min must lie in (0, 1), got {}", self.tau_min));
        }
        if !(self.delta_x_growth > 1.0) || !(self.delta_x_decrease > 0.0 && self.delta_x_decrease < 1.0) {
            return Err("delta_x schedule must grow by more than 1 and shrink by less than 1".into());
        }
        if !(self.kappa_sigma >= 1.0) {
            return Err(format!("kappa_sigma must be at least 1, got {}", self.kappa_sigma));
        }
        Ok(())
    }

    fn strategy_options(&self) -> StrategyOptions {
        StrategyOptions {
            gamma: self.gamma,
            cg_tol: self.cg_tol,
            cg_max_iter: self.cg_max_iter,
            refine_tol: self.refine_tol,
            refine_max_iter: self.refine_max_iter,
            dense_cap: self.dense_cap,
            dump_dir: self.dump_dir.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    RestorationFailure,
    StrategyFailure,
    /// the model could not be evaluated at an accepted point
    EvaluationFailure,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "Optimal",
            SolveStatus::MaxIter => "MaxIter",
            SolveStatus::RestorationFailure => "RestorationFailure",
            SolveStatus::StrategyFailure => "StrategyFailure",
            SolveStatus::EvaluationFailure => "EvaluationFailure",
        };
        f.write_str(s)
    }
}

/// Wall-clock seconds per phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timers {
    /// model relaxation and symbolic analysis (callers add compile time)
    pub init_s: f64,
    /// every model evaluation
    pub ad_s: f64,
    /// assembly, factorization, CG and refinement
    pub linsolve_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iter: usize,
    pub objective: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub mu: f64,
    /// steps that produced this iterate
    pub alpha_primal: f64,
    pub alpha_dual: f64,
    pub delta_x: f64,
    pub delta_c: f64,
    pub cg_iterations: usize,
    pub refinement_iterations: usize,
    pub linear_residual: f64,
    pub line_search_trials: usize,
    /// smallest distance to a finite bound (variables and slacks)
    pub min_gap: f64,
    /// smallest multiplier of a finite bound
    pub min_multiplier: f64,
}

/// Final KKT residual of the solved problem at `μ = 0`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ResidualSummary {
    pub dual_infeasibility: f64,
    pub primal_infeasibility: f64,
    pub complementarity: f64,
    pub unscaled: f64,
    pub scaled: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub message: Option<String>,
    pub strategy: StrategyKind,
    pub n: usize,
    pub m_e: usize,
    pub m_i: usize,
    pub iterations: usize,
    pub objective: f64,
    pub mu: f64,
    pub residual: ResidualSummary,
    /// `‖g(x)‖∞` of the original equalities (differs from the residual
    /// when they were relaxed)
    pub equality_violation: f64,
    pub timers: Timers,
    pub linear_solver: LinearSolverStats,
    pub cg_iterations_mean: f64,
    pub regularized_iterations: usize,
    pub max_delta_x: f64,
    pub log: Vec<IterationLog>,
    #[serde(skip)]
    pub solution: Option<PrimalDualPoint>,
    #[serde(skip)]
    pub iterates: Vec<PrimalDualPoint>,
}

impl SolveReport {
    fn new(model: &CompiledModel, options: &SolverOptions) -> Self {
        Self {
            status: SolveStatus::StrategyFailure,
            message: None,
            strategy: options.strategy,
            n: model.n(),
            m_e: model.m_e(),
            m_i: model.m_i(),
            iterations: 0,
            objective: f64::NAN,
            mu: options.mu_init,
            residual: ResidualSummary::default(),
            equality_violation: f64::NAN,
            timers: Timers::default(),
            linear_solver: LinearSolverStats::default(),
            cg_iterations_mean: 0.0,
            regularized_iterations: 0,
            max_delta_x: 0.0,
            log: Vec::new(),
            solution: None,
            iterates: Vec::new(),
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn time_per_iteration(&self) -> f64 {
        self.timers.total_s / self.iterations.max(1) as f64
    }
}

fn violation(ev: &Evaluation, s: &[f64]) -> f64 {
    ev.g.iter().map(|v| v.abs()).sum::<f64>() + ev.h.iter().zip(s).map(|(h, s)| (h + s).abs()).sum::<f64>()
}

fn barrier(boxes: &Boxes, f: f64, x: &[f64], s: &[f64], mu: f64) -> f64 {
    f + mu * (boxes.x.log_barrier(x) + boxes.s.log_barrier(s))
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += a * x);
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

/// Runs the interior-point method. Failures are reported through
/// [`SolveReport::status`]; this never panics on bad input.
pub fn solve(model: &CompiledModel, options: &SolverOptions) -> SolveReport {
    let start = Instant::now();
    let mut report = SolveReport::new(model, options);
    if let Err(msg) = options.validate() {
        report.message = Some(format!("invalid options: {msg}"));
        report.timers.total_s = start.elapsed().as_secs_f64();
        return report;
    }

    let t = Instant::now();
    let relaxed;
    let problem = if options.strategy == StrategyKind::Lifted && model.m_e() > 0 {
        match relax_equalities(model, options.tau_relax) {
            Ok(m) => {
                relaxed = m;
                &relaxed
            }
            Err(e) => {
                report.message = Some(format!("relaxation failed: {e}"));
                report.timers.total_s = start.elapsed().as_secs_f64();
                return report;
            }
        }
    } else {
        model
    };
    let patterns = KktPatterns::from_model(problem);
    let strategy = new_strategy(options.strategy, &patterns, &options.strategy_options());
    report.timers.init_s = t.elapsed().as_secs_f64();
    let mut strategy = match strategy {
        Ok(s) => s,
        Err(e) => {
            report.message = Some(e.to_string());
            report.timers.total_s = start.elapsed().as_secs_f64();
            return report;
        }
    };

    let (status, message) = run(problem, options, strategy.as_mut(), &mut report);
    report.status = status;
    report.message = message;
    report.linear_solver = strategy.stats().clone();
    let steps = report.log.len().saturating_sub(1).max(1);
    report.cg_iterations_mean = report.log.iter().map(|l| l.cg_iterations).sum::<usize>() as f64 / steps as f64;
    if let Some(w) = &report.solution {
        let t = Instant::now();
        report.equality_violation = match model.eval_constraints(&w.x) {
            Ok((g, _)) => g.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
            Err(_) => f64::NAN,
        };
        report.timers.ad_s += t.elapsed().as_secs_f64();
    }
    report.timers.total_s = start.elapsed().as_secs_f64();
    report
}

fn run(
    problem: &CompiledModel,
    options: &SolverOptions,
    strategy: &mut dyn crate::kkt::KktStrategy,
    report: &mut SolveReport,
) -> (SolveStatus, Option<String>) {
    let boxes = Boxes::of(problem);
    let timers = &mut report.timers;

    let t = Instant::now();
    let init = initial_point(problem, &boxes, |x| problem.eval_constraints(x).map(|(_, h)| h), options.bound_push, options.mu_init)
        .and_then(|w| Evaluation::at(problem, &w.x).map(|ev| (w, ev)));
    timers.ad_s += t.elapsed().as_secs_f64();
    let (mut w, mut ev) = match init {
        Ok(v) => v,
        Err(e) => return (SolveStatus::EvaluationFailure, Some(format!("starting point: {e}"))),
    };

    let params = LineSearchParams::with_initial_violation(violation(&ev, &w.s));
    let mut filter = Filter::new();
    let mut reg_state = RegularizationState::default();
    let mut mu = options.mu_init;
    let mut hess = vec![0.0; problem.hessian_pattern().nnz()];
    let mut last = IterationLog {
        iter: 0,
        objective: 0.0,
        primal_infeasibility: 0.0,
        dual_infeasibility: 0.0,
        mu,
        alpha_primal: 0.0,
        alpha_dual: 0.0,
        delta_x: 0.0,
        delta_c: 0.0,
        cg_iterations: 0,
        refinement_iterations: 0,
        linear_residual: 0.0,
        line_search_trials: 0,
        min_gap: 0.0,
        min_multiplier: 0.0,
    };

    for iter in 0.. {
        let res0 = residual_from(&boxes, &ev, &w, 0.0);
        last.iter = iter;
        last.objective = ev.f;
        last.primal_infeasibility = res0.primal_infeasibility;
        last.dual_infeasibility = res0.dual_infeasibility;
        last.mu = mu;
        last.min_gap = boxes.min_gap(&w);
        last.min_multiplier = boxes.min_multiplier(&w);
        report.log.push(last.clone());
        report.iterations = iter;
        report.objective = ev.f;
        report.mu = mu;
        report.residual = ResidualSummary {
            dual_infeasibility: res0.dual_infeasibility,
            primal_infeasibility: res0.primal_infeasibility,
            complementarity: res0.complementarity,
            unscaled: res0.unscaled,
            scaled: res0.scaled,
        };
        report.solution = Some(w.clone());
        if options.record_iterates {
            report.iterates.push(w.clone());
        }
        if res0.unscaled <= options.tol {
            return (SolveStatus::Optimal, None);
        }
        if iter >= options.max_iter {
            return (SolveStatus::MaxIter, None);
        }

        loop {
            let e_mu = residual_from(&boxes, &ev, &w, mu).scaled;
            let next = update_mu(mu, e_mu, options);
            if next >= mu {
                break;
            }
            mu = next;
            filter.clear();
        }

        let t = Instant::now();
        let hres = problem.eval_hessian_lagrangian_into(&w.x, &w.y, &w.z, 1.0, &mut hess);
        timers.ad_s += t.elapsed().as_secs_f64();
        if let Err(e) = hres {
            return (SolveStatus::EvaluationFailure, Some(format!("Hessian at iteration {iter}: {e}")));
        }

        let mut r1 = ev.lagrangian_gradient(&w.y, &w.z);
        axpy(-1.0, &boxes.x.barrier_pull(&w.x, mu), &mut r1);
        let mut r2 = w.z.clone();
        axpy(-1.0, &boxes.s.barrier_pull(&w.s, mu), &mut r2);
        let mut inputs = KktInputs {
            w: CooMatrix::new(problem.hessian_pattern().clone(), hess.clone()).expect("pattern length"),
            w_diag: boxes.x.sigma(&w.x, &w.zl, &w.zu),
            g: ev.jac_g.clone(),
            h: ev.jac_h.clone(),
            d_s: boxes.s.sigma(&w.s, &w.nu, &w.nu_upper),
            r1,
            r2,
            r3: ev.g.clone(),
            r4: ev.h.iter().zip(&w.s).map(|(h, s)| h + s).collect(),
            delta_x: 0.0,
            delta_c: 0.0,
        };

        let t = Instant::now();
        let solved = inertia_correction(strategy, &mut inputs, &mut reg_state, options, mu);
        timers.linsolve_s += t.elapsed().as_secs_f64();
        let reg = match solved {
            Ok(r) => r,
            Err(e) => return (SolveStatus::StrategyFailure, Some(format!("iteration {iter}: {e}"))),
        };
        if reg.delta_x > 0.0 {
            report.regularized_iterations += 1;
            report.max_delta_x = report.max_delta_x.max(reg.delta_x);
        }
        let d = &reg.result.step;
        let (dzl, dzu) = boxes.x.multiplier_steps(&w.x, &d.dx, &w.zl, &w.zu, mu);
        let (dnu, dnu_u) = boxes.s.multiplier_steps(&w.s, &d.ds, &w.nu, &w.nu_upper, mu);

        let tau = options.tau_min.max(1.0 - mu);
        let alpha_max = boxes.x.max_primal_step(&w.x, &d.dx, tau).min(boxes.s.max_primal_step(&w.s, &d.ds, tau));
        let alpha_dual = boxes
            .x
            .max_dual_step(&w.zl, &dzl, &w.zu, &dzu, tau)
            .min(boxes.s.max_dual_step(&w.nu, &dnu, &w.nu_upper, &dnu_u, tau));

        let current = Measure { theta: violation(&ev, &w.s), phi: barrier(&boxes, ev.f, &w.x, &w.s, mu) };
        let grad_phi_d = dot(&ev.grad, &d.dx) - dot(&boxes.x.barrier_pull(&w.x, mu), &d.dx)
            - dot(&boxes.s.barrier_pull(&w.s, mu), &d.ds);

        let tiny = d.dx.iter().zip(&w.x).chain(d.ds.iter().zip(&w.s)).all(|(d, v)| d.abs() < 10.0 * f64::EPSILON * (1.0 + v.abs()));
        let (alpha, trials) = if tiny {
            (alpha_max, 0)
        } else {
            let mut xt = w.x.clone();
            let mut st = w.s.clone();
            let mut trial = |alpha: f64| {
                xt.iter_mut().zip(&w.x).zip(&d.dx).for_each(|((t, x), d)| *t = x + alpha * d);
                st.iter_mut().zip(&w.s).zip(&d.ds).for_each(|((t, s), d)| *t = s + alpha * d);
                let t = Instant::now();
                let out = problem.eval_objective(&xt).and_then(|f| problem.eval_constraints(&xt).map(|(g, h)| (f, g, h)));
                timers.ad_s += t.elapsed().as_secs_f64();
                let (f, g, h) = out.ok()?;
                let theta = g.iter().map(|v| v.abs()).sum::<f64>() + h.iter().zip(&st).map(|(h, s)| (h + s).abs()).sum::<f64>();
                Some(Measure { theta, phi: barrier(&boxes, f, &xt, &st, mu) })
            };
            match filter_line_search(current, grad_phi_d, alpha_max, &mut filter, &params, &mut trial) {
                LineSearchOutcome::Accepted { alpha, trials, .. } => (alpha, trials),
                LineSearchOutcome::RestorationTrigger { alpha, trials } => {
                    return (
                        SolveStatus::RestorationFailure,
                        Some(format!("iteration {iter}: step size {alpha:.3e} below minimum after {trials} trials")),
                    )
                }
            }
        };

        axpy(alpha, &d.dx, &mut w.x);
        axpy(alpha, &d.ds, &mut w.s);
        axpy(alpha, &d.dy, &mut w.y);
        axpy(alpha, &d.dz, &mut w.z);
        axpy(alpha_dual, &dzl, &mut w.zl);
        axpy(alpha_dual, &dzu, &mut w.zu);
        axpy(alpha_dual, &dnu, &mut w.nu);
        axpy(alpha_dual, &dnu_u, &mut w.nu_upper);
        boxes.x.safeguard(&w.x, &mut w.zl, &mut w.zu, mu, options.kappa_sigma);
        boxes.s.safeguard(&w.s, &mut w.nu, &mut w.nu_upper, mu, options.kappa_sigma);

        let t = Instant::now();
        let next = Evaluation::at(problem, &w.x);
        timers.ad_s += t.elapsed().as_secs_f64();
        ev = match next {
            Ok(e) => e,
            Err(e) => return (SolveStatus::EvaluationFailure, Some(format!("iteration {iter}: {e}"))),
        };

        let tel = &reg.result.telemetry;
        last.alpha_primal = alpha;
        last.alpha_dual = alpha_dual;
        last.delta_x = reg.delta_x;
        last.delta_c = reg.delta_c;
        last.cg_iterations = tel.cg_iterations;
        last.refinement_iterations = tel.refinement_iterations;
        last.linear_residual = tel.residual;
        last.line_search_trials = trials;
    }
    unreachable!("the iteration loop only exits by returning")
}
