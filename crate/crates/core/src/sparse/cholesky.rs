//! Sparse LDLᵀ Cholesky with a symbolic phase that is computed once per
//! pattern and reused by every numeric refactorization.
//!
//! The factorization is up-looking: row `k` of `L` is obtained from a sparse
//! triangular solve whose nonzero pattern is the reach of column `k` of the
//! permuted upper triangle in the elimination tree.

use std::sync::Arc;

use super::csc::CscMatrix;
use super::ordering::{amd_order, invert_permutation};
use super::SparseError;

const NONE: usize = usize::MAX;

/// Pattern-only analysis of a symmetric matrix: ordering, elimination tree
/// and the structure of `L`.
#[derive(Debug)]
pub struct SymbolicFactorization {
    n: usize,
    perm: Vec<usize>,
    parent: Vec<usize>,
    col_counts: Vec<usize>,
    l_colptr: Vec<usize>,
    l_rowidx: Vec<usize>,
    // upper triangle of P A Pᵀ, column by column
    c_colptr: Vec<usize>,
    c_rowidx: Vec<usize>,
    // value index in the input lower-triangle CSC -> value index in C
    value_map: Vec<usize>,
    input_colptr: Vec<usize>,
    input_rowidx: Vec<usize>,
}

/// Numeric factor `P A Pᵀ = L D Lᵀ` with unit lower `L` and `D > 0`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    symbolic: Arc<SymbolicFactorization>,
    l_values: Vec<f64>,
    d: Vec<f64>,
}

impl SymbolicFactorization {
    /// Analyses `pattern` (lower-triangle symmetric storage) under `perm`.
    pub fn new(pattern: &CscMatrix, perm: Vec<usize>) -> Result<Self, SparseError> {
        if !pattern.is_symmetric() {
            return Err(SparseError::Structure("symbolic analysis expects symmetric storage".into()));
        }
        let n = pattern.ncols();
        if perm.len() != n {
            return Err(SparseError::Dimension(format!("permutation of length {} for n = {n}", perm.len())));
        }
        let pinv = invert_permutation(&perm);

        // C = P A Pᵀ, upper triangle, via counting sort on the permuted column.
        let mut counts = vec![0usize; n + 1];
        let mut targets = Vec::with_capacity(pattern.nnz());
        for (r, c, _) in pattern.iter() {
            let (pr, pc) = (pinv[r], pinv[c]);
            let (row, col) = if pr <= pc { (pr, pc) } else { (pc, pr) };
            targets.push((row, col));
            counts[col + 1] += 1;
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let c_colptr = counts.clone();
        let mut next = counts;
        let mut c_rowidx = vec![0usize; targets.len()];
        let mut value_map = vec![0usize; targets.len()];
        for (k, &(row, col)) in targets.iter().enumerate() {
            let dst = next[col];
            next[col] += 1;
            c_rowidx[dst] = row;
            value_map[k] = dst;
        }
        // sort rows inside each column, carrying the map along
        let mut inv_map = vec![0usize; targets.len()];
        for (k, &dst) in value_map.iter().enumerate() {
            inv_map[dst] = k;
        }
        for j in 0..n {
            let (lo, hi) = (c_colptr[j], c_colptr[j + 1]);
            let mut seg: Vec<(usize, usize)> = (lo..hi).map(|p| (c_rowidx[p], inv_map[p])).collect();
            seg.sort_unstable();
            for (off, (row, k)) in seg.into_iter().enumerate() {
                c_rowidx[lo + off] = row;
                value_map[k] = lo + off;
            }
        }

        // elimination tree and column counts
        let mut parent = vec![NONE; n];
        let mut flag = vec![NONE; n];
        let mut col_counts = vec![0usize; n];
        for k in 0..n {
            flag[k] = k;
            for p in c_colptr[k]..c_colptr[k + 1] {
                let mut i = c_rowidx[p];
                while i < k && flag[i] != k {
                    if parent[i] == NONE {
                        parent[i] = k;
                    }
                    col_counts[i] += 1;
                    flag[i] = k;
                    i = parent[i];
                }
            }
        }
        let mut l_colptr = vec![0usize; n + 1];
        for j in 0..n {
            l_colptr[j + 1] = l_colptr[j] + col_counts[j];
        }

        // row indices of L; rows are visited in increasing k so each column is sorted
        let mut l_rowidx = vec![0usize; l_colptr[n]];
        let mut fill = l_colptr[..n].to_vec();
        flag.iter_mut().for_each(|f| *f = NONE);
        for k in 0..n {
            flag[k] = k;
            for p in c_colptr[k]..c_colptr[k + 1] {
                let mut i = c_rowidx[p];
                while i < k && flag[i] != k {
                    l_rowidx[fill[i]] = k;
                    fill[i] += 1;
                    flag[i] = k;
                    i = parent[i];
                }
            }
        }

        Ok(Self {
            n,
            perm,
            parent,
            col_counts,
            l_colptr,
            l_rowidx,
            c_colptr,
            c_rowidx,
            value_map,
            input_colptr: pattern.col_ptr().to_vec(),
            input_rowidx: pattern.row_idx().to_vec(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// Elimination tree; roots carry `None`.
    pub fn etree(&self) -> Vec<Option<usize>> {
        self.parent.iter().map(|&p| (p != NONE).then_some(p)).collect()
    }

    /// Strictly-lower nonzero count per column of `L`.
    pub fn column_counts(&self) -> &[usize] {
        &self.col_counts
    }

    pub fn l_colptr(&self) -> &[usize] {
        &self.l_colptr
    }

    pub fn l_rowidx(&self) -> &[usize] {
        &self.l_rowidx
    }

    /// Nonzeros of `L` including its unit diagonal.
    pub fn factor_nnz(&self) -> usize {
        self.l_rowidx.len() + self.n
    }

    pub fn matches(&self, a: &CscMatrix) -> bool {
        a.is_symmetric() && a.ncols() == self.n && a.col_ptr() == self.input_colptr && a.row_idx() == self.input_rowidx
    }
}

/// Ordering plus symbolic analysis in one call.
pub fn analyse(pattern: &CscMatrix) -> Result<Arc<SymbolicFactorization>, SparseError> {
    let perm = amd_order(pattern);
    Ok(Arc::new(SymbolicFactorization::new(pattern, perm)?))
}

/// Pattern-only symbolic Cholesky under a given permutation.
pub fn symbolic_cholesky(pattern: &CscMatrix, perm: Vec<usize>) -> Result<SymbolicFactorization, SparseError> {
    SymbolicFactorization::new(pattern, perm)
}

/// Numeric LDLᵀ against a previously computed symbolic analysis.
pub fn numeric_factor(sym: &Arc<SymbolicFactorization>, a: &CscMatrix) -> Result<CholeskyFactor, SparseError> {
    if !sym.matches(a) {
        return Err(SparseError::PatternMismatch);
    }
    let n = sym.n;
    let mut cx = vec![0.0; sym.c_rowidx.len()];
    for (k, &v) in a.values().iter().enumerate() {
        cx[sym.value_map[k]] += v;
    }

    let mut l_values = vec![0.0; sym.l_rowidx.len()];
    let mut d = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut filled = vec![0usize; n];
    let mut flag = vec![NONE; n];
    let mut stack = vec![0usize; n];

    for k in 0..n {
        // nonzero pattern of row k of L, in topological order at stack[top..n]
        let mut top = n;
        flag[k] = k;
        for p in sym.c_colptr[k]..sym.c_colptr[k + 1] {
            let mut i = sym.c_rowidx[p];
            y[i] += cx[p];
            let mut len = 0;
            while i < k && flag[i] != k {
                stack[len] = i;
                len += 1;
                flag[i] = k;
                i = sym.parent[i];
            }
            while len > 0 {
                top -= 1;
                len -= 1;
                stack[top] = stack[len];
            }
        }
        d[k] = y[k];
        y[k] = 0.0;
        for &j in &stack[top..n] {
            let yj = y[j];
            y[j] = 0.0;
            let start = sym.l_colptr[j];
            let end = start + filled[j];
            for p in start..end {
                y[sym.l_rowidx[p]] -= l_values[p] * yj;
            }
            let lkj = yj / d[j];
            d[k] -= lkj * yj;
            debug_assert_eq!(sym.l_rowidx[end], k);
            l_values[end] = lkj;
            filled[j] += 1;
        }
        if d[k] <= 0.0 || !d[k].is_finite() {
            return Err(SparseError::NotPositiveDefinite { pivot: k });
        }
    }
    Ok(CholeskyFactor { symbolic: Arc::clone(sym), l_values, d })
}

impl CholeskyFactor {
    pub fn symbolic(&self) -> &Arc<SymbolicFactorization> {
        &self.symbolic
    }

    pub fn l_values(&self) -> &[f64] {
        &self.l_values
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn n(&self) -> usize {
        self.symbolic.n
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, SparseError> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }

    pub fn solve_in_place(&self, b: &mut [f64]) -> Result<(), SparseError> {
        let sym = &*self.symbolic;
        let n = sym.n;
        if b.len() != n {
            return Err(SparseError::Dimension(format!("rhs of length {} for n = {n}", b.len())));
        }
        let mut x: Vec<f64> = sym.perm.iter().map(|&p| b[p]).collect();
        for j in 0..n {
            let xj = x[j];
            if xj != 0.0 {
                for p in sym.l_colptr[j]..sym.l_colptr[j + 1] {
                    x[sym.l_rowidx[p]] -= self.l_values[p] * xj;
                }
            }
        }
        for (xj, dj) in x.iter_mut().zip(&self.d) {
            *xj /= dj;
        }
        for j in (0..n).rev() {
            let mut acc = x[j];
            for p in sym.l_colptr[j]..sym.l_colptr[j + 1] {
                acc -= self.l_values[p] * x[sym.l_rowidx[p]];
            }
            x[j] = acc;
        }
        for (k, &p) in sym.perm.iter().enumerate() {
            b[p] = x[k];
        }
        Ok(())
    }

    /// Dense `L D Lᵀ` in the permuted ordering (tests).
    pub fn reconstruct_permuted(&self) -> Vec<Vec<f64>> {
        let sym = &*self.symbolic;
        let n = sym.n;
        let mut l = vec![vec![0.0; n]; n];
        for j in 0..n {
            l[j][j] = 1.0;
            for p in sym.l_colptr[j]..sym.l_colptr[j + 1] {
                l[sym.l_rowidx[p]][j] = self.l_values[p];
            }
        }
        let mut out = vec![vec![0.0; n]; n];
        for i in 0..n {
            for k in 0..n {
                let s: f64 = (0..=i.min(k)).map(|j| l[i][j] * self.d[j] * l[k][j]).sum();
                out[i][k] = s;
            }
        }
        out
    }

}
