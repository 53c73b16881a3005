use serde::Serialize;

use crate::expr::{CompiledModel, EvalError};
use crate::sparse::CooMatrix;

/// Finite-bound bookkeeping for one family of boxed quantities.
#[derive(Debug, Clone)]
pub(crate) struct BoxSet {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub has_lo: Vec<bool>,
    pub has_hi: Vec<bool>,
}

impl BoxSet {
    pub fn new(lo: &[f64], hi: &[f64]) -> Self {
        Self {
            lo: lo.to_vec(),
            hi: hi.to_vec(),
            has_lo: lo.iter().map(|v| v.is_finite()).collect(),
            has_hi: hi.iter().map(|v| v.is_finite()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.lo.len()
    }

    pub fn count(&self) -> usize {
        self.has_lo.iter().chain(&self.has_hi).filter(|b| **b).count()
    }

    /// Pushes `v` strictly inside the box (relative push `κ`).
    pub fn push_inside(&self, v: &mut [f64], kappa: f64) {
        for i in 0..v.len() {
            let (lo, hi) = (self.lo[i], self.hi[i]);
            let width = hi - lo;
            if self.has_lo[i] {
                let mut p = kappa * lo.abs().max(1.0);
                if self.has_hi[i] {
                    p = p.min(kappa * width);
                }
                v[i] = v[i].max(lo + p);
            }
            if self.has_hi[i] {
                let mut p = kappa * hi.abs().max(1.0);
                if self.has_lo[i] {
                    p = p.min(kappa * width);
                }
                v[i] = v[i].min(hi - p);
            }
        }
    }

    /// `v − lo` on bounded entries, `+∞` elsewhere.
    pub fn lower_gaps(&self, v: &[f64]) -> Vec<f64> {
        (0..v.len()).map(|i| if self.has_lo[i] { v[i] - self.lo[i] } else { f64::INFINITY }).collect()
    }

    pub fn upper_gaps(&self, v: &[f64]) -> Vec<f64> {
        (0..v.len()).map(|i| if self.has_hi[i] { self.hi[i] - v[i] } else { f64::INFINITY }).collect()
    }

    pub fn min_gap(&self, v: &[f64]) -> f64 {
        self.lower_gaps(v).into_iter().chain(self.upper_gaps(v)).fold(f64::INFINITY, f64::min)
    }

    /// `−Σ ln(gap)` over finite bounds.
    pub fn log_barrier(&self, v: &[f64]) -> f64 {
        let mut b = 0.0;
        for i in 0..v.len() {
            if self.has_lo[i] {
                b -= (v[i] - self.lo[i]).ln();
            }
            if self.has_hi[i] {
                b -= (self.hi[i] - v[i]).ln();
            }
        }
        b
    }

    /// `μ/gap_lo − μ/gap_hi`, the gradient of `−μ Σ ln(gap)` with its sign flipped.
    pub fn barrier_pull(&self, v: &[f64], mu: f64) -> Vec<f64> {
        (0..v.len())
            .map(|i| {
                let mut t = 0.0;
                if self.has_lo[i] {
                    t += mu / (v[i] - self.lo[i]);
                }
                if self.has_hi[i] {
                    t -= mu / (self.hi[i] - v[i]);
                }
                t
            })
            .collect()
    }

    /// `m_lo/gap_lo + m_hi/gap_hi`.
    pub fn sigma(&self, v: &[f64], m_lo: &[f64], m_hi: &[f64]) -> Vec<f64> {
        (0..v.len())
            .map(|i| {
                let mut t = 0.0;
                if self.has_lo[i] {
                    t += m_lo[i] / (v[i] - self.lo[i]);
                }
                if self.has_hi[i] {
                    t += m_hi[i] / (self.hi[i] - v[i]);
                }
                t
            })
            .collect()
    }

    /// Newton steps of the bound multipliers given the primal step `dv`.
    pub fn multiplier_steps(&self, v: &[f64], dv: &[f64], m_lo: &[f64], m_hi: &[f64], mu: f64) -> (Vec<f64>, Vec<f64>) {
        let n = v.len();
        let mut dlo = vec![0.0; n];
        let mut dhi = vec![0.0; n];
        for i in 0..n {
            if self.has_lo[i] {
                let gap = v[i] - self.lo[i];
                dlo[i] = mu / gap - m_lo[i] - m_lo[i] / gap * dv[i];
            }
            if self.has_hi[i] {
                let gap = self.hi[i] - v[i];
                dhi[i] = mu / gap - m_hi[i] + m_hi[i] / gap * dv[i];
            }
        }
        (dlo, dhi)
    }

    /// Multipliers `μ/gap` on bounded entries, zero elsewhere.
    pub fn centred_multipliers(&self, v: &[f64], mu: f64) -> (Vec<f64>, Vec<f64>) {
        let lo = self.lower_gaps(v).into_iter().zip(&self.has_lo).map(|(g, &b)| if b { mu / g } else { 0.0 }).collect();
        let hi = self.upper_gaps(v).into_iter().zip(&self.has_hi).map(|(g, &b)| if b { mu / g } else { 0.0 }).collect();
        (lo, hi)
    }

    /// Keeps each multiplier within `[μ/(κ gap), κ μ/gap]`.
    pub fn safeguard(&self, v: &[f64], m_lo: &mut [f64], m_hi: &mut [f64], mu: f64, kappa: f64) {
        for i in 0..v.len() {
            if self.has_lo[i] {
                let gap = v[i] - self.lo[i];
                m_lo[i] = m_lo[i].clamp(mu / (kappa * gap), kappa * mu / gap);
            }
            if self.has_hi[i] {
                let gap = self.hi[i] - v[i];
                m_hi[i] = m_hi[i].clamp(mu / (kappa * gap), kappa * mu / gap);
            }
        }
    }

    /// Largest `α ∈ (0, 1]` keeping every gap above `(1 − τ)` of its value.
    pub fn max_primal_step(&self, v: &[f64], dv: &[f64], tau: f64) -> f64 {
        let mut a = 1.0_f64;
        for i in 0..v.len() {
            if self.has_lo[i] && dv[i] < 0.0 {
                a = a.min(-tau * (v[i] - self.lo[i]) / dv[i]);
            }
            if self.has_hi[i] && dv[i] > 0.0 {
                a = a.min(tau * (self.hi[i] - v[i]) / dv[i]);
            }
        }
        a
    }

    pub fn max_dual_step(&self, m_lo: &[f64], d_lo: &[f64], m_hi: &[f64], d_hi: &[f64], tau: f64) -> f64 {
        let mut a = 1.0_f64;
        for i in 0..m_lo.len() {
            if self.has_lo[i] {
                a = a.min(max_step(&m_lo[i..=i], &d_lo[i..=i], tau));
            }
            if self.has_hi[i] {
                a = a.min(max_step(&m_hi[i..=i], &d_hi[i..=i], tau));
            }
        }
        a
    }
}

/// Largest `α ∈ (0, 1]` with `v + α dv >= (1 − τ) v` for a positive `v`.
pub(crate) fn max_step(v: &[f64], dv: &[f64], tau: f64) -> f64 {
    v.iter().zip(dv).filter(|(_, d)| **d < 0.0).fold(1.0, |a: f64, (v, d)| a.min(-tau * v / d))
}

/// Primal-dual iterate. Multipliers of absent bounds are held at zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrimalDualPoint {
    pub x: Vec<f64>,
    pub s: Vec<f64>,
    /// equality multipliers
    pub y: Vec<f64>,
    /// inequality multipliers
    pub z: Vec<f64>,
    /// multipliers of the slack lower bounds (`ν`)
    pub nu: Vec<f64>,
    /// multipliers of the slack upper bounds (ranged rows only)
    pub nu_upper: Vec<f64>,
    /// multipliers of the variable lower bounds
    pub zl: Vec<f64>,
    /// multipliers of the variable upper bounds
    pub zu: Vec<f64>,
}

impl PrimalDualPoint {
    pub fn zeros(n: usize, m_e: usize, m_i: usize) -> Self {
        Self {
            x: vec![0.0; n],
            s: vec![0.0; m_i],
            y: vec![0.0; m_e],
            z: vec![0.0; m_i],
            nu: vec![0.0; m_i],
            nu_upper: vec![0.0; m_i],
            zl: vec![0.0; n],
            zu: vec![0.0; n],
        }
    }
}

/// Box data of a model: variable bounds and slack bounds.
#[derive(Debug, Clone)]
pub(crate) struct Boxes {
    pub x: BoxSet,
    pub s: BoxSet,
}

impl Boxes {
    pub fn of(model: &CompiledModel) -> Self {
        Self {
            x: BoxSet::new(model.lower_bounds(), model.upper_bounds()),
            s: BoxSet::new(model.slack_lower(), model.slack_upper()),
        }
    }

    pub fn count(&self) -> usize {
        self.x.count() + self.s.count()
    }

    pub fn min_gap(&self, w: &PrimalDualPoint) -> f64 {
        self.x.min_gap(&w.x).min(self.s.min_gap(&w.s))
    }

    /// Smallest multiplier attached to a finite bound.
    pub fn min_multiplier(&self, w: &PrimalDualPoint) -> f64 {
        let mut m = f64::INFINITY;
        for (set, lo, hi) in [(&self.x, &w.zl, &w.zu), (&self.s, &w.nu, &w.nu_upper)] {
            for i in 0..set.len() {
                if set.has_lo[i] {
                    m = m.min(lo[i]);
                }
                if set.has_hi[i] {
                    m = m.min(hi[i]);
                }
            }
        }
        m
    }
}

/// Function values and first derivatives at one `x`.
#[derive(Debug, Clone)]
pub(crate) struct Evaluation {
    pub f: f64,
    pub grad: Vec<f64>,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
    pub jac_g: CooMatrix,
    pub jac_h: CooMatrix,
}

impl Evaluation {
    pub fn at(model: &CompiledModel, x: &[f64]) -> Result<Self, EvalError> {
        let mut grad = vec![0.0; model.n()];
        let f = model.eval_objective_gradient(x, &mut grad)?;
        let (g, h) = model.eval_constraints(x)?;
        let (gv, hv) = model.eval_jacobians(x)?;
        let jac_g = CooMatrix::new(model.jacobian_eq_pattern().clone(), gv).expect("pattern length");
        let jac_h = CooMatrix::new(model.jacobian_ineq_pattern().clone(), hv).expect("pattern length");
        Ok(Self { f, grad, g, h, jac_g, jac_h })
    }

    /// `∇f + Gᵀy + Hᵀz`
    pub fn lagrangian_gradient(&self, y: &[f64], z: &[f64]) -> Vec<f64> {
        let mut r = self.grad.clone();
        self.jac_g.mul_t_add(y, &mut r);
        self.jac_h.mul_t_add(z, &mut r);
        r
    }
}

/// Blocks of the perturbed KKT map at one point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KktResidual {
    /// `∇f + Gᵀy + Hᵀz − z_l + z_u`
    pub stationarity: Vec<f64>,
    /// `z − ν + ν_u`
    pub slack_stationarity: Vec<f64>,
    /// `g(x)`
    pub equality: Vec<f64>,
    /// `h(x) + s`
    pub inequality: Vec<f64>,
    /// `(s − s_lo) ν − μ` (zero on rows without that bound)
    pub slack_complementarity: Vec<f64>,
    /// `(s_hi − s) ν_u − μ`
    pub slack_upper_complementarity: Vec<f64>,
    /// `(x − x_lo) z_l − μ`
    pub lower_complementarity: Vec<f64>,
    /// `(x_hi − x) z_u − μ`
    pub upper_complementarity: Vec<f64>,
    pub dual_infeasibility: f64,
    pub primal_infeasibility: f64,
    pub complementarity: f64,
    /// max over the blocks, no scaling
    pub unscaled: f64,
    /// max over the blocks with dual and complementarity blocks divided by
    /// the multiplier-magnitude scale factors
    pub scaled: f64,
}

/// Scale cap for the multiplier-magnitude scaling of the residual.
pub(crate) const S_MAX: f64 = 100.0;

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn one_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn complementarity(set: &BoxSet, v: &[f64], m_lo: &[f64], m_hi: &[f64], mu: f64) -> (Vec<f64>, Vec<f64>) {
    let lo = (0..v.len()).map(|i| if set.has_lo[i] { (v[i] - set.lo[i]) * m_lo[i] - mu } else { 0.0 }).collect();
    let hi = (0..v.len()).map(|i| if set.has_hi[i] { (set.hi[i] - v[i]) * m_hi[i] - mu } else { 0.0 }).collect();
    (lo, hi)
}

pub(crate) fn residual_from(boxes: &Boxes, ev: &Evaluation, w: &PrimalDualPoint, mu: f64) -> KktResidual {
    let mut stationarity = ev.lagrangian_gradient(&w.y, &w.z);
    for i in 0..stationarity.len() {
        stationarity[i] += w.zu[i] - w.zl[i];
    }
    let slack_stationarity: Vec<f64> = (0..w.s.len()).map(|i| w.z[i] - w.nu[i] + w.nu_upper[i]).collect();
    let equality = ev.g.clone();
    let inequality: Vec<f64> = ev.h.iter().zip(&w.s).map(|(h, s)| h + s).collect();
    let (slack_complementarity, slack_upper_complementarity) = complementarity(&boxes.s, &w.s, &w.nu, &w.nu_upper, mu);
    let (lower_complementarity, upper_complementarity) = complementarity(&boxes.x, &w.x, &w.zl, &w.zu, mu);

    let dual_infeasibility = inf_norm(&stationarity).max(inf_norm(&slack_stationarity));
    let primal_infeasibility = inf_norm(&equality).max(inf_norm(&inequality));
    let complementarity = [&slack_complementarity, &slack_upper_complementarity, &lower_complementarity, &upper_complementarity]
        .iter()
        .fold(0.0_f64, |m, b| m.max(inf_norm(b)));

    let bound_mults = one_norm(&w.nu) + one_norm(&w.nu_upper) + one_norm(&w.zl) + one_norm(&w.zu);
    let n_bounds = boxes.count();
    let n_mults = w.y.len() + w.z.len() + n_bounds;
    let s_d = if n_mults == 0 {
        1.0
    } else {
        S_MAX.max((one_norm(&w.y) + one_norm(&w.z) + bound_mults) / n_mults as f64) / S_MAX
    };
    let s_c = if n_bounds == 0 { 1.0 } else { S_MAX.max(bound_mults / n_bounds as f64) / S_MAX };

    KktResidual {
        unscaled: dual_infeasibility.max(primal_infeasibility).max(complementarity),
        scaled: (dual_infeasibility / s_d).max(primal_infeasibility).max(complementarity / s_c),
        stationarity,
        slack_stationarity,
        equality,
        inequality,
        slack_complementarity,
        slack_upper_complementarity,
        lower_complementarity,
        upper_complementarity,
        dual_infeasibility,
        primal_infeasibility,
        complementarity,
    }
}

/// Residual of the barrier KKT conditions with target `μ` (`μ = 0` gives
/// the optimality conditions themselves).
pub fn kkt_residual(model: &CompiledModel, w: &PrimalDualPoint, mu: f64) -> Result<KktResidual, EvalError> {
    let ev = Evaluation::at(model, &w.x)?;
    Ok(residual_from(&Boxes::of(model), &ev, w, mu))
}

/// Starting point: model start pushed inside its box, slacks `max(κ, −h)`
/// pushed inside theirs, `y = z = 0`, bound multipliers `μ₀/gap`.
pub(crate) fn initial_point(model: &CompiledModel, boxes: &Boxes, h0: impl Fn(&[f64]) -> Result<Vec<f64>, EvalError>, kappa: f64, mu0: f64) -> Result<PrimalDualPoint, EvalError> {
    let mut w = PrimalDualPoint::zeros(model.n(), model.m_e(), model.m_i());
    w.x.copy_from_slice(model.start());
    boxes.x.push_inside(&mut w.x, kappa);
    let h = h0(&w.x)?;
    w.s = h.iter().map(|v| -v).collect();
    boxes.s.push_inside(&mut w.s, kappa);
    (w.zl, w.zu) = boxes.x.centred_multipliers(&w.x, mu0);
    (w.nu, w.nu_upper) = boxes.s.centred_multipliers(&w.s, mu0);
    Ok(w)
}
