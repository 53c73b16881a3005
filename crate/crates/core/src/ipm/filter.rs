use serde::Serialize;

/// Set of `(θ, φ)` pairs no trial point may be dominated by.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Filter {
    entries: Vec<(f64, f64)>,
}

impl Filter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[(f64, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    /// A pair is acceptable when no entry is at least as good in both
    /// measures.
    pub fn acceptable(&self, theta: f64, phi: f64) -> bool {
        self.entries.iter().all(|&(t, p)| theta < t || phi < p)
    }

    /// Adds a pair, dropping the entries it dominates. A pair that is
    /// itself dominated is not stored.
    pub fn insert(&mut self, theta: f64, phi: f64) {
        if !self.acceptable(theta, phi) {
            return;
        }
        self.entries.retain(|&(t, p)| !(theta <= t && phi <= p));
        self.entries.push((theta, phi));
    }
}
