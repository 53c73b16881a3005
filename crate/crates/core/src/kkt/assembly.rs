use crate::sparse::{CscMatrix, SparsePattern};

use super::{KktError, KktInputs, KktPatterns};

/// Row-wise outer products `Aᵀ diag(d) A` scattered into fixed slots.
#[derive(Debug, Clone)]
struct RowProducts {
    // (entry a, entry b, value slot) grouped by row
    row_ptr: Vec<usize>,
    pairs: Vec<(usize, usize, usize)>,
}

impl RowProducts {
    fn scatter(&self, values: &[f64], weights: impl Fn(usize) -> f64, out: &mut [f64]) {
        for row in 0..self.row_ptr.len() - 1 {
            let d = weights(row);
            if d == 0.0 {
                continue;
            }
            for &(a, b, slot) in &self.pairs[self.row_ptr[row]..self.row_ptr[row + 1]] {
                out[slot] += d * values[a] * values[b];
            }
        }
    }
}

/// Assembles `K = W + diag(w_diag) + δx I + Hᵀ D_s H (+ γ GᵀG)` into a
/// lower-triangle CSC matrix whose pattern is fixed at construction.
#[derive(Debug, Clone)]
pub struct CondensedAssembler {
    matrix: CscMatrix,
    patterns: KktPatterns,
    w_slots: Vec<usize>,
    diag_slots: Vec<usize>,
    h_products: RowProducts,
    g_products: Option<RowProducts>,
}

impl CondensedAssembler {
    /// `with_gram` adds the pattern of `GᵀG` (HyKKT).
    pub fn new(patterns: &KktPatterns, with_gram: bool) -> Result<Self, KktError> {
        let n = patterns.n();
        let mut coords: Vec<(usize, usize)> = Vec::new();
        let diag_start = coords.len();
        coords.extend((0..n).map(|i| (i, i)));
        let w_start = coords.len();
        for (r, c) in patterns.w.iter() {
            if r < c {
                return Err(KktError::Dimension("W pattern must be lower triangular".into()));
            }
            coords.push((r, c));
        }

        let plan = |p: &SparsePattern, coords: &mut Vec<(usize, usize)>| -> (Vec<usize>, Vec<(usize, usize, usize)>) {
            let mut by_row: Vec<Vec<usize>> = vec![Vec::new(); p.nrows()];
            for (k, (r, _)) in p.iter().enumerate() {
                by_row[r].push(k);
            }
            let mut row_ptr = vec![0];
            let mut pairs = Vec::new();
            for entries in &by_row {
                for (i, &a) in entries.iter().enumerate() {
                    for &b in &entries[..=i] {
                        let (ca, cb) = (p.cols()[a], p.cols()[b]);
                        let (hi, lo) = if ca >= cb { (ca, cb) } else { (cb, ca) };
                        pairs.push((a, b, coords.len()));
                        coords.push((hi, lo));
                    }
                }
                row_ptr.push(pairs.len());
            }
            (row_ptr, pairs)
        };
        let (h_ptr, h_pairs) = plan(&patterns.h, &mut coords);
        let g_plan = with_gram.then(|| plan(&patterns.g, &mut coords));

        let pattern = SparsePattern::new(n, n, coords.iter().map(|c| c.0).collect(), coords.iter().map(|c| c.1).collect())?;
        let (matrix, map) = CscMatrix::symmetric_from_pattern(&pattern)?;
        let remap = |pairs: Vec<(usize, usize, usize)>| -> Vec<(usize, usize, usize)> {
            pairs.into_iter().map(|(a, b, k)| (a, b, map[k])).collect()
        };
        let h_products = RowProducts { row_ptr: h_ptr, pairs: remap(h_pairs) };
        let g_products = g_plan.map(|(row_ptr, pairs)| RowProducts { row_ptr, pairs: remap(pairs) });
        Ok(Self {
            diag_slots: map[diag_start..w_start].to_vec(),
            w_slots: map[w_start..w_start + patterns.w.nnz()].to_vec(),
            matrix,
            patterns: patterns.clone(),
            h_products,
            g_products,
        })
    }

    pub fn matrix(&self) -> &CscMatrix {
        &self.matrix
    }

    /// Writes the current values; `gamma` is required iff the assembler was
    /// built with the Gram pattern.
    pub fn assemble(&mut self, inputs: &KktInputs, gamma: Option<f64>) -> Result<&CscMatrix, KktError> {
        let same = |a: &SparsePattern, b: &SparsePattern| std::ptr::eq(a, b) || a == b;
        if !same(&inputs.w.pattern, &self.patterns.w)
            || !same(&inputs.h.pattern, &self.patterns.h)
            || (self.g_products.is_some() && !same(&inputs.g.pattern, &self.patterns.g))
        {
            return Err(KktError::Dimension("inputs do not match the assembled pattern".into()));
        }
        let vals = self.matrix.values_mut();
        vals.iter_mut().for_each(|v| *v = 0.0);
        for (k, &slot) in self.w_slots.iter().enumerate() {
            vals[slot] += inputs.w.values[k];
        }
        for (i, &slot) in self.diag_slots.iter().enumerate() {
            vals[slot] += inputs.w_diag[i] + inputs.delta_x;
        }
        self.h_products.scatter(&inputs.h.values, |r| inputs.d_s[r], vals);
        if let Some(g) = &self.g_products {
            let gamma = gamma.ok_or_else(|| KktError::Dimension("γ required for the augmented-Lagrangian term".into()))?;
            g.scatter(&inputs.g.values, |_| gamma, vals);
        }
        Ok(&self.matrix)
    }
}

/// Right-hand side of the condensed system:
/// `(−(r1 + Hᵀ(D_s r4 − r2)), −r3)`.
pub fn condensed_rhs(inputs: &KktInputs) -> (Vec<f64>, Vec<f64>) {
    let t: Vec<f64> = (0..inputs.m_i()).map(|i| inputs.d_s[i] * inputs.r4[i] - inputs.r2[i]).collect();
    let mut top = inputs.r1.clone();
    inputs.h.mul_t_add(&t, &mut top);
    top.iter_mut().for_each(|v| *v = -*v);
    (top, inputs.r3.iter().map(|v| -v).collect())
}

/// `ds = −r4 − H dx`, `dz = −r2 − D_s ds`.
pub fn recover_slack_dual(dx: &[f64], inputs: &KktInputs) -> (Vec<f64>, Vec<f64>) {
    let mut hdx = vec![0.0; inputs.m_i()];
    inputs.h.mul_add(dx, &mut hdx);
    let ds: Vec<f64> = (0..inputs.m_i()).map(|i| -inputs.r4[i] - hdx[i]).collect();
    let dz = (0..inputs.m_i()).map(|i| -inputs.r2[i] - inputs.d_s[i] * ds[i]).collect();
    (ds, dz)
}
