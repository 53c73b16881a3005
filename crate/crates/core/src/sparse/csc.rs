//! Compressed sparse column storage and coordinate patterns.

use std::sync::Arc;

use super::SparseError;

/// Deduplicated coordinate list describing where a sparse matrix may hold
/// nonzeros. Shared between the model layer and the KKT assemblers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsePattern {
    nrows: usize,
    ncols: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
}

impl SparsePattern {
    /// Builds a pattern from already-deduplicated coordinates.
    pub fn new(nrows: usize, ncols: usize, rows: Vec<usize>, cols: Vec<usize>) -> Result<Self, SparseError> {
        if rows.len() != cols.len() {
            return Err(SparseError::Dimension(format!(
                "coordinate lists differ in length ({} vs {})",
                rows.len(),
                cols.len()
            )));
        }
        for (&r, &c) in rows.iter().zip(&cols) {
            if r >= nrows || c >= ncols {
                return Err(SparseError::Dimension(format!(
                    "coordinate ({r}, {c}) outside {nrows}x{ncols}"
                )));
            }
        }
        Ok(Self { nrows, ncols, rows, cols })
    }

    pub fn empty(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, rows: Vec::new(), cols: Vec::new() }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows.iter().copied().zip(self.cols.iter().copied())
    }
}

/// A sparse matrix as values laid over a shared, immutable pattern.
#[derive(Debug, Clone)]
pub struct CooMatrix {
    pub pattern: Arc<SparsePattern>,
    pub values: Vec<f64>,
}

impl CooMatrix {
    pub fn new(pattern: Arc<SparsePattern>, values: Vec<f64>) -> Result<Self, SparseError> {
        if values.len() != pattern.nnz() {
            return Err(SparseError::Dimension(format!(
                "{} values for a pattern with {} entries",
                values.len(),
                pattern.nnz()
            )));
        }
        Ok(Self { pattern, values })
    }

    pub fn zeros(pattern: Arc<SparsePattern>) -> Self {
        let values = vec![0.0; pattern.nnz()];
        Self { pattern, values }
    }

    pub fn nrows(&self) -> usize {
        self.pattern.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.pattern.ncols()
    }

    /// `y += A x`
    pub fn mul_add(&self, x: &[f64], y: &mut [f64]) {
        for ((r, c), v) in self.pattern.iter().zip(&self.values) {
            y[r] += v * x[c];
        }
    }

    /// `y += Aᵀ x`
    pub fn mul_t_add(&self, x: &[f64], y: &mut [f64]) {
        for ((r, c), v) in self.pattern.iter().zip(&self.values) {
            y[c] += v * x[r];
        }
    }

    /// `y += A x` treating the stored lower triangle as a symmetric matrix.
    pub fn sym_mul_add(&self, x: &[f64], y: &mut [f64]) {
        for ((r, c), v) in self.pattern.iter().zip(&self.values) {
            y[r] += v * x[c];
            if r != c {
                y[c] += v * x[r];
            }
        }
    }

    /// Row-major dense copy (tests and small dense paths).
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols()]; self.nrows()];
        for ((r, c), v) in self.pattern.iter().zip(&self.values) {
            d[r][c] += v;
        }
        d
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Compressed sparse column matrix. Symmetric matrices keep only their lower
/// triangle (`r >= c` for every stored entry).
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    nrows: usize,
    ncols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

impl CscMatrix {
    /// Validating constructor from raw CSC arrays.
    pub fn from_raw(
        nrows: usize,
        ncols: usize,
        col_ptr: Vec<usize>,
        row_idx: Vec<usize>,
        values: Vec<f64>,
        symmetric: bool,
    ) -> Result<Self, SparseError> {
        if col_ptr.len() != ncols + 1 || col_ptr[0] != 0 {
            return Err(SparseError::Structure("column pointer length or origin".into()));
        }
        if row_idx.len() != values.len() || *col_ptr.last().unwrap() != row_idx.len() {
            return Err(SparseError::Structure("row index / value length mismatch".into()));
        }
        if symmetric && nrows != ncols {
            return Err(SparseError::Structure("symmetric storage requires a square matrix".into()));
        }
        for c in 0..ncols {
            if col_ptr[c] > col_ptr[c + 1] {
                return Err(SparseError::Structure(format!("column pointers decrease at {c}")));
            }
            let col = &row_idx[col_ptr[c]..col_ptr[c + 1]];
            for w in col.windows(2) {
                if w[0] >= w[1] {
                    return Err(SparseError::Structure(format!("rows not strictly increasing in column {c}")));
                }
            }
            if let Some(&last) = col.last() {
                if last >= nrows {
                    return Err(SparseError::Structure(format!("row {last} out of range in column {c}")));
                }
            }
            if symmetric && col.first().is_some_and(|&r| r < c) {
                return Err(SparseError::Structure(format!("upper-triangle entry in symmetric column {c}")));
            }
        }
        Ok(Self { nrows, ncols, col_ptr, row_idx, values, symmetric })
    }

    /// Builds from triplets, summing duplicates. For `symmetric`, entries in
    /// the upper triangle are mirrored into the lower triangle.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
        symmetric: bool,
    ) -> Result<Self, SparseError> {
        let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for &(r, c, v) in triplets {
            if r >= nrows || c >= ncols {
                return Err(SparseError::Dimension(format!("triplet ({r}, {c}) outside {nrows}x{ncols}")));
            }
            let (r, c) = if symmetric && r < c { (c, r) } else { (r, c) };
            entries.push((r, c, v));
        }
        entries.sort_by_key(|&(r, c, _)| (c, r));
        let mut col_ptr = vec![0usize; ncols + 1];
        let mut row_idx = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            row_idx.push(r);
            values.push(v);
            col_ptr[c + 1] += 1;
            last = Some((r, c));
        }
        for c in 0..ncols {
            col_ptr[c + 1] += col_ptr[c];
        }
        Self::from_raw(nrows, ncols, col_ptr, row_idx, values, symmetric)
    }

    /// Lower-triangle symmetric CSC from a coordinate pattern; returns the
    /// matrix together with the map `coordinate index -> CSC value index`.
    pub fn symmetric_from_pattern(pattern: &SparsePattern) -> Result<(Self, Vec<usize>), SparseError> {
        let n = pattern.nrows();
        if n != pattern.ncols() {
            return Err(SparseError::Structure("symmetric pattern must be square".into()));
        }
        let mut order: Vec<(usize, usize, usize)> = pattern
            .iter()
            .enumerate()
            .map(|(k, (r, c))| if r >= c { (r, c, k) } else { (c, r, k) })
            .collect();
        order.sort_by_key(|&(r, c, _)| (c, r));
        let mut col_ptr = vec![0usize; n + 1];
        let mut row_idx = Vec::with_capacity(order.len());
        let mut map = vec![0usize; order.len()];
        let mut last: Option<(usize, usize)> = None;
        for (r, c, k) in order {
            if last != Some((r, c)) {
                row_idx.push(r);
                col_ptr[c + 1] += 1;
                last = Some((r, c));
            }
            map[k] = row_idx.len() - 1;
        }
        for c in 0..n {
            col_ptr[c + 1] += col_ptr[c];
        }
        let values = vec![0.0; row_idx.len()];
        Ok((Self::from_raw(n, n, col_ptr, row_idx, values, true)?, map))
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            col_ptr: (0..=n).collect(),
            row_idx: (0..n).collect(),
            values: vec![1.0; n],
            symmetric: true,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// True when both matrices have identical structure (values ignored).
    pub fn same_pattern(&self, other: &CscMatrix) -> bool {
        self.nrows == other.nrows
            && self.ncols == other.ncols
            && self.symmetric == other.symmetric
            && self.col_ptr == other.col_ptr
            && self.row_idx == other.row_idx
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.ncols).flat_map(move |c| {
            (self.col_ptr[c]..self.col_ptr[c + 1]).map(move |p| (self.row_idx[p], c, self.values[p]))
        })
    }

    /// `y = A x`, expanding symmetric storage.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for (r, c, v) in self.iter() {
            y[r] += v * x[c];
            if self.symmetric && r != c {
                y[c] += v * x[r];
            }
        }
    }

    /// Dense row-major copy, symmetric storage expanded.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, c, v) in self.iter() {
            d[r][c] += v;
            if self.symmetric && r != c {
                d[c][r] += v;
            }
        }
        d
    }

    pub fn norm_max(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Adjacency lists of the symmetric graph (diagonal excluded).
    pub(crate) fn adjacency(&self) -> Vec<Vec<usize>> {
        let n = self.ncols;
        let mut adj = vec![Vec::new(); n];
        for (r, c, _) in self.iter() {
            if r != c {
                adj[r].push(c);
                adj[c].push(r);
            }
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        adj
    }
}
