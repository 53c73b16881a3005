//! Dense symmetric-indefinite LBLᵀ with inertia, used by the augmented
//! baseline and as a small-scale reference solver.

use faer::linalg::solvers::{Lblt, Solve};
use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use super::SparseError;

/// Largest dimension accepted by [`dense_ldlt`] unless overridden.
pub const DEFAULT_DENSE_CAP: usize = 5_000;

/// Relative pivot threshold below which a pivot eigenvalue counts as zero.
pub const INERTIA_ZERO_TOL: f64 = 1e-10;

/// Signature of a symmetric matrix: counts of positive, zero and negative
/// eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Inertia {
    pub positive: usize,
    pub zero: usize,
    pub negative: usize,
}

impl Inertia {
    pub fn new(positive: usize, zero: usize, negative: usize) -> Self {
        Self { positive, zero, negative }
    }

    /// Classifies eigenvalues with `|λ| <= tol` as zero.
    pub fn from_eigenvalues(eigs: &[f64], tol: f64) -> Self {
        let mut i = Self::new(0, 0, 0);
        for &l in eigs {
            i.add(l, tol);
        }
        i
    }

    fn add(&mut self, value: f64, tol: f64) {
        if value.abs() <= tol || !value.is_finite() {
            self.zero += 1;
        } else if value > 0.0 {
            self.positive += 1;
        } else {
            self.negative += 1;
        }
    }

    pub fn dim(&self) -> usize {
        self.positive + self.zero + self.negative
    }
}

impl std::fmt::Display for Inertia {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {})", self.positive, self.zero, self.negative)
    }
}

/// Dense symmetric matrix, column-major, both triangles stored.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSymmetric {
    n: usize,
    data: Vec<f64>,
}

impl DenseSymmetric {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "row {i} has the wrong length");
            for (j, &v) in row.iter().enumerate() {
                m.data[j * n + i] = v;
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.n + i]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[j * self.n + i] = v;
    }

    /// Adds `v` at `(i, j)` and, off the diagonal, at `(j, i)`.
    pub fn add_sym(&mut self, i: usize, j: usize, v: f64) {
        self.data[j * self.n + i] += v;
        if i != j {
            self.data[i * self.n + j] += v;
        }
    }

    pub fn norm_max(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (j, &xj) in x.iter().enumerate() {
            let col = &self.data[j * self.n..(j + 1) * self.n];
            for (yi, a) in y.iter_mut().zip(col) {
                *yi += a * xj;
            }
        }
        y
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.get(i, j)).collect()).collect()
    }
}

/// LBLᵀ factor with the inertia read off its 1×1 and 2×2 pivot blocks
/// (Sylvester's law of inertia).
pub struct DenseInertiaFactor {
    factor: Lblt<f64>,
    inertia: Inertia,
    n: usize,
}

impl std::fmt::Debug for DenseInertiaFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DenseInertiaFactor").field("n", &self.n).field("inertia", &self.inertia).finish()
    }
}

pub fn dense_ldlt(a: &DenseSymmetric) -> Result<DenseInertiaFactor, SparseError> {
    dense_ldlt_with_cap(a, DEFAULT_DENSE_CAP)
}

pub fn dense_ldlt_with_cap(a: &DenseSymmetric, cap: usize) -> Result<DenseInertiaFactor, SparseError> {
    let n = a.n;
    if n > cap {
        return Err(SparseError::DenseCapExceeded { n, cap });
    }
    let mat = Mat::<f64>::from_fn(n, n, |i, j| a.get(i, j));
    let factor = mat.lblt(Side::Lower);
    let tol = INERTIA_ZERO_TOL * a.norm_max().max(f64::MIN_POSITIVE);

    let diag = factor.B_diag();
    let sub = factor.B_subdiag();
    let mut inertia = Inertia::new(0, 0, 0);
    let mut i = 0;
    while i < n {
        if i + 1 < n && sub[i] != 0.0 {
            let (p, q, r) = (diag[i], diag[i + 1], sub[i]);
            let mid = 0.5 * (p + q);
            let rad = (0.25 * (p - q) * (p - q) + r * r).sqrt();
            inertia.add(mid + rad, tol);
            inertia.add(mid - rad, tol);
            i += 2;
        } else {
            inertia.add(diag[i], tol);
            i += 1;
        }
    }
    Ok(DenseInertiaFactor { factor, inertia, n })
}

impl DenseInertiaFactor {
    pub fn inertia(&self) -> Inertia {
        self.inertia
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Solves `A x = b`. Meaningless when the inertia reports zero pivots.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut rhs = Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        self.factor.solve_in_place(rhs.as_mut());
        (0..self.n).map(|i| rhs[(i, 0)]).collect()
    }
}
