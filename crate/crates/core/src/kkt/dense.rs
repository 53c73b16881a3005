use crate::sparse::{dense_ldlt_with_cap, DenseSymmetric, Inertia};

use super::{condensed_rhs, recover_slack_dual, AugmentedForm, KktError, KktInputs, Step};

/// Dense augmented matrix ordered `(x, s, y, z)`.
pub fn dense_augmented(inputs: &KktInputs, form: AugmentedForm) -> DenseSymmetric {
    let (n, me, mi) = (inputs.n(), inputs.m_e(), inputs.m_i());
    let (os, oy, oz) = (n, n + mi, n + mi + me);
    let mut a = DenseSymmetric::zeros(n + 2 * mi + me);
    let (sx, dc) = match form {
        AugmentedForm::Regularized => (inputs.delta_x, inputs.delta_c),
        AugmentedForm::Condensed => (0.0, 0.0),
    };
    for ((r, c), v) in inputs.w.pattern.iter().zip(&inputs.w.values) {
        a.add_sym(r, c, *v);
    }
    for i in 0..n {
        a.add_sym(i, i, inputs.w_diag[i] + inputs.delta_x);
    }
    for i in 0..mi {
        a.add_sym(os + i, os + i, inputs.d_s[i] + sx);
        a.add_sym(oz + i, os + i, 1.0);
        a.add_sym(oz + i, oz + i, -dc);
    }
    for j in 0..me {
        a.add_sym(oy + j, oy + j, -dc);
    }
    for ((r, c), v) in inputs.g.pattern.iter().zip(&inputs.g.values) {
        a.add_sym(oy + r, c, *v);
    }
    for ((r, c), v) in inputs.h.pattern.iter().zip(&inputs.h.values) {
        a.add_sym(oz + r, c, *v);
    }
    a
}

/// Dense condensed matrix `K = W + diag(w_diag) + δx I + Hᵀ D_s H`.
pub fn dense_condensed(inputs: &KktInputs) -> DenseSymmetric {
    let n = inputs.n();
    let mut k = DenseSymmetric::zeros(n);
    for ((r, c), v) in inputs.w.pattern.iter().zip(&inputs.w.values) {
        k.add_sym(r, c, *v);
    }
    for i in 0..n {
        k.add_sym(i, i, inputs.w_diag[i] + inputs.delta_x);
    }
    let h = inputs.h.to_dense();
    for (i, row) in h.iter().enumerate() {
        let nz: Vec<(usize, f64)> = row.iter().copied().enumerate().filter(|(_, v)| *v != 0.0).collect();
        for &(a, va) in &nz {
            for &(b, vb) in &nz {
                if a >= b {
                    k.add_sym(a, b, inputs.d_s[i] * va * vb);
                }
            }
        }
    }
    k
}

/// Dense `[K Gᵀ; G −δc I]`.
pub fn dense_condensed_kkt(inputs: &KktInputs) -> DenseSymmetric {
    let (n, me) = (inputs.n(), inputs.m_e());
    let k = dense_condensed(inputs);
    let mut a = DenseSymmetric::zeros(n + me);
    for i in 0..n {
        for j in 0..=i {
            a.set(i, j, k.get(i, j));
            a.set(j, i, k.get(i, j));
        }
    }
    for ((r, c), v) in inputs.g.pattern.iter().zip(&inputs.g.values) {
        a.add_sym(n + r, c, *v);
    }
    for j in 0..me {
        a.add_sym(n + j, n + j, -inputs.delta_c);
    }
    a
}

/// Condensed-elimination step: dense factorization of the condensed KKT
/// matrix (inertia target `(n, 0, m_e)`), then slack/dual recovery.
pub fn solve_condensed_dense(inputs: &KktInputs, cap: usize) -> Result<Step, KktError> {
    inputs.validate()?;
    let (n, me) = (inputs.n(), inputs.m_e());
    let f = dense_ldlt_with_cap(&dense_condensed_kkt(inputs), cap)?;
    let expected = Inertia::new(n, 0, me);
    if f.inertia() != expected {
        return Err(KktError::WrongInertia { found: f.inertia(), expected });
    }
    let (top, bottom) = condensed_rhs(inputs);
    let rhs: Vec<f64> = top.into_iter().chain(bottom).collect();
    let sol = f.solve(&rhs);
    let dx = sol[..n].to_vec();
    let (ds, dz) = recover_slack_dual(&dx, inputs);
    Ok(Step { dx, ds, dy: sol[n..].to_vec(), dz })
}
