//! Streaming z-score normalization of state vectors.
//!
//! Running mean and variance are maintained per dimension with Welford's
//! algorithm. Normalization always uses the statistics accumulated
//! *before* the current sample (so the very first sample passes through
//! unchanged and seeds the statistics), and variance is the population
//! form `M₂ / count`.

use nalgebra::DVector;

use super::AgentError;

/// Variance regularizer inside the square root: `(x − μ)/√(σ² + ε)`.
const VAR_EPS: f64 = 1e-8;

/// Per-dimension running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    mean: Vec<f64>,
    m2: Vec<f64>,
    count: u64,
}

impl Normalizer {
    /// Fresh normalizer for `dim`-dimensional states.
    pub fn new(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], m2: vec![0.0; dim], count: 0 }
    }

    /// Reassembles a normalizer from stored parts, checking invariants.
    pub fn from_parts(mean: Vec<f64>, m2: Vec<f64>, count: u64) -> Result<Self, AgentError> {
        if mean.len() != m2.len() {
            return Err(AgentError::BadCheckpoint(format!(
                "normalizer mean/m2 length mismatch: {} vs {}",
                mean.len(),
                m2.len()
            )));
        }
        if !mean.iter().chain(m2.iter()).all(|v| v.is_finite()) {
            return Err(AgentError::BadCheckpoint("non-finite normalizer statistics".into()));
        }
        if m2.iter().any(|&v| v < 0.0) {
            return Err(AgentError::BadCheckpoint("negative normalizer variance sum".into()));
        }
        if count == 0 && (mean.iter().any(|&v| v != 0.0) || m2.iter().any(|&v| v != 0.0)) {
            return Err(AgentError::BadCheckpoint(
                "zero-count normalizer must have zero statistics".into(),
            ));
        }
        Ok(Self { mean, m2, count })
    }

    /// State dimension.
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Samples absorbed so far.
    pub fn count(&self) -> u64 {
        self.count
    }

    /// Running means.
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Running sums of squared deviations (`M₂` in Welford's recurrence).
    pub fn m2(&self) -> &[f64] {
        &self.m2
    }

    /// Population variance per dimension (`M₂ / count`; zeros at count 0).
    pub fn variance(&self) -> Vec<f64> {
        if self.count == 0 {
            vec![0.0; self.dim()]
        } else {
            self.m2.iter().map(|&v| v / self.count as f64).collect()
        }
    }

    /// Normalizes `x` with the current statistics; when `update` is true,
    /// `x` is then absorbed into them. A zero-count normalizer returns `x`
    /// unchanged by convention.
    ///
    /// Panics when the dimension does not match.
    pub fn normalize(&mut self, x: &DVector<f64>, update: bool) -> DVector<f64> {
        assert_eq!(x.len(), self.dim(), "state dimension mismatch");
        let out = if self.count == 0 {
            x.clone()
        } else {
            let n = self.count as f64;
            DVector::from_fn(x.len(), |i, _| {
                (x[i] - self.mean[i]) / (self.m2[i] / n + VAR_EPS).sqrt()
            })
        };
        if update {
            self.observe(x);
        }
        out
    }

    /// Absorbs one sample into the running statistics.
    pub fn observe(&mut self, x: &DVector<f64>) {
        assert_eq!(x.len(), self.dim(), "state dimension mismatch");
        self.count += 1;
        let n = self.count as f64;
        for i in 0..self.dim() {
            let delta = x[i] - self.mean[i];
            self.mean[i] += delta / n;
            self.m2[i] += delta * (x[i] - self.mean[i]);
        }
    }
}
