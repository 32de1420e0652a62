use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Tolerance on the sum of a prevalence vector.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// A point on the probability simplex over `K` classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Prevalence(Vec<f64>);

impl Prevalence {
    /// Validates `values` (non-negative, finite, summing to one within
    /// [`SIMPLEX_TOL`]).
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("prevalence"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput(format!(
                "prevalence entries must be finite and non-negative: {values:?}"
            )));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidInput(format!("prevalence must sum to 1, got {sum}")));
        }
        Ok(Prevalence(values))
    }

    /// Normalizes non-negative `weights` to sum to one.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput("weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidInput("weights sum to zero".into()));
        }
        Ok(Prevalence(weights.iter().map(|w| w / total).collect()))
    }

    pub fn uniform(k: usize) -> Self {
        Prevalence(vec![1.0 / k as f64; k])
    }

    /// Relative class frequencies of `labels` over `k` classes.
    pub fn from_labels(labels: impl IntoIterator<Item = usize>, k: usize) -> Result<Self> {
        let mut counts = vec![0.0; k];
        for y in labels {
            if y >= k {
                return Err(Error::InvalidInput(format!("label {y} out of range for K={k}")));
            }
            counts[y] += 1.0;
        }
        Self::from_weights(&counts)
    }

    pub fn num_classes(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for Prevalence {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Prevalence::new(v)
    }
}

impl From<Prevalence> for Vec<f64> {
    fn from(p: Prevalence) -> Self {
        p.0
    }
}

impl std::ops::Index<usize> for Prevalence {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_off_simplex() {
        assert!(Prevalence::new(vec![0.5, 0.6]).is_err());
        assert!(Prevalence::new(vec![-0.1, 1.1]).is_err());
        assert!(Prevalence::new(vec![]).is_err());
        assert!(Prevalence::new(vec![0.25, 0.75]).is_ok());
    }

    #[test]
    fn from_labels_counts() {
        let p = Prevalence::from_labels([0, 0, 1, 2], 3).unwrap();
        assert_eq!(p.as_slice(), &[0.5, 0.25, 0.25]);
    }
}
