//! Conjugate gradient and Richardson iterative refinement.

use super::SparseError;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Unpreconditioned conjugate gradient on a symmetric positive definite
/// operator. `apply(v, out)` must write `A v` into `out`.
///
/// Stops once `‖b − A x‖₂ / ‖b‖₂ <= tol` (recursively updated residual).
/// On hitting `max_iter` returns [`SparseError::NoConvergence`] carrying the
/// iterate with the smallest residual seen.
pub fn cg_solve<F>(mut apply: F, b: &[f64], tol: f64, max_iter: usize) -> Result<CgOutcome, SparseError>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n = b.len();
    let bnorm = norm2(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(CgOutcome { x, iterations: 0, relative_residual: 0.0 });
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let mut best = (1.0, x.clone());

    for it in 1..=max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            // operator is not positive definite along p
            return Err(SparseError::NoConvergence { iterations: it, relative_residual: best.0, best: best.1 });
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let rel = rr_new.sqrt() / bnorm;
        if rel < best.0 {
            best = (rel, x.clone());
        }
        if rel <= tol {
            return Ok(CgOutcome { x, iterations: it, relative_residual: rel });
        }
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    Err(SparseError::NoConvergence { iterations: max_iter, relative_residual: best.0, best: best.1 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refined {
    pub x: Vec<f64>,
    /// Number of `direct_solve` calls, including the initial solve.
    pub iterations: usize,
    /// `‖b − A x‖∞ / ‖b‖∞` of the returned iterate.
    pub relative_residual: f64,
    /// Every residual seen, first entry after the initial solve.
    pub history: Vec<f64>,
    /// Set when `max_iter` was reached above tolerance.
    pub degraded: bool,
}

/// Richardson iteration `x ← x + M⁻¹ (b − A x)` with `M⁻¹ = direct_solve`.
///
/// Converged when `‖b − A x‖∞ <= tol ‖b‖∞`. Two consecutive residual
/// increases abort with [`SparseError::RefinementDiverged`].
pub fn richardson_refine<S, A>(
    mut direct_solve: S,
    mut apply: A,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Refined, SparseError>
where
    S: FnMut(&[f64]) -> Vec<f64>,
    A: FnMut(&[f64], &mut [f64]),
{
    let n = b.len();
    let bnorm = norm_inf(b);
    if bnorm == 0.0 {
        return Ok(Refined { x: vec![0.0; n], iterations: 0, relative_residual: 0.0, history: vec![], degraded: false });
    }
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut ax = vec![0.0; n];
    let mut history = Vec::new();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut increases = 0;

    for it in 1..=max_iter.max(1) {
        let dx = direct_solve(&r);
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi += di;
        }
        apply(&x, &mut ax);
        for i in 0..n {
            r[i] = b[i] - ax[i];
        }
        let rel = norm_inf(&r) / bnorm;
        if let Some(&last) = history.last() {
            if rel > last {
                increases += 1;
            } else {
                increases = 0;
            }
        }
        history.push(rel);
        if best.as_ref().is_none_or(|(b, _)| rel < *b) {
            best = Some((rel, x.clone()));
        }
        if rel <= tol {
            return Ok(Refined { x, iterations: it, relative_residual: rel, history, degraded: false });
        }
        if increases >= 2 || !rel.is_finite() {
            let (relative_residual, best) = best.unwrap();
            return Err(SparseError::RefinementDiverged { iterations: it, relative_residual, best });
        }
    }
    let (relative_residual, x) = best.unwrap();
    Ok(Refined { x, iterations: history.len(), relative_residual, history, degraded: true })
}
