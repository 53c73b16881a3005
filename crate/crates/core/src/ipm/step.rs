use serde::Serialize;
use thiserror::Error;

use super::filter::Filter;
use super::point::max_step;
use super::SolverOptions;
use crate::kkt::{KktError, KktInputs, KktStrategy, StepResult};

/// `(α_primal_max, α_dual_max)`: the largest steps in `(0, 1]` keeping
/// `s + α ds >= (1 − τ) s` and `ν + α dν >= (1 − τ) ν`.
pub fn fraction_to_boundary(s: &[f64], ds: &[f64], nu: &[f64], dnu: &[f64], tau: f64) -> (f64, f64) {
    (max_step(s, ds, tau), max_step(nu, dnu, tau))
}

/// Monotone barrier update: when the barrier residual `kkt_norm_mu` is below
/// `κ_ε μ`, returns `max(tol/10, min(κ_μ μ, μ^θ_μ))`; otherwise `μ`.
pub fn update_mu(mu: f64, kkt_norm_mu: f64, options: &SolverOptions) -> f64 {
    if kkt_norm_mu <= options.kappa_eps * mu {
        (options.tol / 10.0).max((options.kappa_mu * mu).min(mu.powf(options.theta_mu))).min(mu)
    } else {
        mu
    }
}

/// Primal and dual regularization that made the Newton system solvable.
#[derive(Debug, Clone, PartialEq)]
pub struct Regularized {
    pub delta_x: f64,
    pub delta_c: f64,
    /// number of factorizations tried
    pub attempts: usize,
    pub result: StepResult,
}

/// Memory of the inertia-correction loop across iterations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct RegularizationState {
    /// last nonzero `δx` that succeeded
    pub last_delta_x: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InertiaError {
    #[error("primal regularization exceeded {limit:e} without reaching the required inertia")]
    DeltaTooLarge { limit: f64 },
    #[error(transparent)]
    Strategy(#[from] KktError),
}

/// `max_i Σ_j |W_ij|` over the symmetric matrix stored as its lower
/// triangle plus the extra diagonal.
pub(crate) fn w_inf_norm(inputs: &KktInputs) -> f64 {
    let mut rows = vec![0.0_f64; inputs.w_diag.len()];
    let mut diag = inputs.w_diag.clone();
    for ((r, c), v) in inputs.w.pattern.iter().zip(&inputs.w.values) {
        if r == c {
            diag[r] += v;
        } else {
            rows[r] += v.abs();
            rows[c] += v.abs();
        }
    }
    rows.iter().zip(&diag).map(|(r, d)| r + d.abs()).fold(0.0, f64::max)
}

/// Tries the unregularized system first, then `δc` once on detected
/// singularity (strategies that represent it), then a geometrically growing
/// `δx` until the strategy reports the required inertia.
pub fn inertia_correction(
    strategy: &mut dyn KktStrategy,
    inputs: &mut KktInputs,
    state: &mut RegularizationState,
    options: &SolverOptions,
    mu: f64,
) -> Result<Regularized, InertiaError> {
    inputs.delta_x = 0.0;
    inputs.delta_c = 0.0;
    let mut attempts = 0;
    loop {
        attempts += 1;
        match strategy.solve(inputs) {
            Ok(result) => {
                if inputs.delta_x > 0.0 {
                    state.last_delta_x = inputs.delta_x;
                }
                return Ok(Regularized { delta_x: inputs.delta_x, delta_c: inputs.delta_c, attempts, result });
            }
            Err(e) if e.needs_regularization() => {
                if e.is_singular() && strategy.uses_dual_regularization() && inputs.delta_c == 0.0 {
                    inputs.delta_c = options.delta_c_base * mu.powf(options.delta_c_exponent);
                    continue;
                }
                inputs.delta_x = if inputs.delta_x == 0.0 {
                    if state.last_delta_x == 0.0 {
                        options.delta_x_first * w_inf_norm(inputs).max(1.0)
                    } else {
                        (state.last_delta_x * options.delta_x_decrease).max(options.delta_x_min)
                    }
                } else {
                    inputs.delta_x * options.delta_x_growth
                };
                if inputs.delta_x > options.delta_x_max {
                    return Err(InertiaError::DeltaTooLarge { limit: options.delta_x_max });
                }
            }
            Err(e) => return Err(e.into()),
        }
    }
}

/// Constraint violation and barrier objective of one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Measure {
    pub theta: f64,
    pub phi: f64,
}

/// Filter line-search constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineSearchParams {
    pub gamma_theta: f64,
    pub gamma_phi: f64,
    pub delta: f64,
    pub s_theta: f64,
    pub s_phi: f64,
    pub eta_phi: f64,
    pub gamma_alpha: f64,
    pub theta_min: f64,
    pub theta_max: f64,
}

impl LineSearchParams {
    /// Constants relative to the violation `θ₀` of the starting point.
    pub fn with_initial_violation(theta0: f64) -> Self {
        Self {
            gamma_theta: 1e-5,
            gamma_phi: 1e-5,
            delta: 1.0,
            s_theta: 1.1,
            s_phi: 2.3,
            eta_phi: 1e-8,
            gamma_alpha: 0.05,
            theta_min: 1e-4 * theta0.max(1.0),
            theta_max: 1e4 * theta0.max(1.0),
        }
    }

    /// Smallest step worth trying before giving up.
    pub fn alpha_min(&self, current: Measure, grad_phi_d: f64) -> f64 {
        let th = current.theta;
        let a = if grad_phi_d < 0.0 {
            let mut a = self.gamma_theta.min(-self.gamma_phi * th / grad_phi_d);
            if th <= self.theta_min {
                a = a.min(self.delta * th.powf(self.s_theta) / (-grad_phi_d).powf(self.s_phi));
            }
            a
        } else {
            self.gamma_theta
        };
        (self.gamma_alpha * a).max(f64::EPSILON)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum LineSearchOutcome {
    Accepted {
        alpha: f64,
        trials: usize,
        /// accepted by the Armijo condition (filter left unchanged)
        f_type: bool,
        measure: Measure,
    },
    /// step size fell below the minimum; restoration would be required
    RestorationTrigger { alpha: f64, trials: usize },
}

/// Backtracking `α = α_max 2⁻ᵏ` until the trial is acceptable to the
/// filter and satisfies either the Armijo condition (when the switching
/// condition holds and `θ` is small) or sufficient decrease in `θ` or `φ`.
/// `trial(α)` returns `None` where the model cannot be evaluated.
pub fn filter_line_search(
    current: Measure,
    grad_phi_d: f64,
    alpha_max: f64,
    filter: &mut Filter,
    params: &LineSearchParams,
    mut trial: impl FnMut(f64) -> Option<Measure>,
) -> LineSearchOutcome {
    let alpha_min = params.alpha_min(current, grad_phi_d);
    let (th, ph) = (current.theta, current.phi);
    let mut alpha = alpha_max;
    let mut trials = 0;
    loop {
        if alpha < alpha_min {
            return LineSearchOutcome::RestorationTrigger { alpha, trials };
        }
        trials += 1;
        if let Some(m) = trial(alpha) {
            if m.theta.is_finite() && m.phi.is_finite() && m.theta <= params.theta_max && filter.acceptable(m.theta, m.phi) {
                let switching =
                    grad_phi_d < 0.0 && alpha * (-grad_phi_d).powf(params.s_phi) > params.delta * th.powf(params.s_theta);
                if th <= params.theta_min && switching {
                    if m.phi <= ph + params.eta_phi * alpha * grad_phi_d {
                        return LineSearchOutcome::Accepted { alpha, trials, f_type: true, measure: m };
                    }
                } else if m.theta <= (1.0 - params.gamma_theta) * th || m.phi <= ph - params.gamma_phi * th {
                    filter.insert((1.0 - params.gamma_theta) * th, ph - params.gamma_phi * th);
                    return LineSearchOutcome::Accepted { alpha, trials, f_type: false, measure: m };
                }
            }
        }
        alpha *= 0.5;
    }
}
