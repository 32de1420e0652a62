//! Structural importance sampling.
//!
//! Training nodes are reweighted by `ρ̂(x) = q̂(x) / p̂(x)`, where `q̂` and `p̂`
//! are vertex-kernel density estimates against the test sample and the
//! training set respectively. Within each class the weights are normalized by
//! their sum, so any class-independent scale of `ρ̂` (in particular the label
//! ratio of the two distributions) cancels and is never computed.

use serde::Serialize;

use crate::kernels::VertexKernel;
use crate::{Error, Graph, Result};

pub const DEFAULT_FLOOR: f64 = 1e-12;

/// Relative weights are rounded to this many fractional bits before
/// normalization. The rounding makes class weights independent of the scale
/// of `ρ̂` to the last bit.
const WEIGHT_BITS: i32 = 32;

/// Per-training-node density ratios.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SisWeights {
    /// Training node ids, aligned with `rho`.
    pub nodes: Vec<usize>,
    pub rho: Vec<f64>,
}

impl SisWeights {
    /// `Σ ρ̂` over the training nodes of each class.
    pub fn per_class_norm(&self, labels: &[usize], k: usize) -> Result<Vec<f64>> {
        if labels.len() != self.rho.len() {
            return Err(Error::DimensionMismatch {
                expected: self.rho.len(),
                got: labels.len(),
            });
        }
        let mut norm = vec![0.0; k];
        for (&y, &r) in labels.iter().zip(&self.rho) {
            norm[y] += r;
        }
        Ok(norm)
    }

    pub fn scaled(&self, c: f64) -> Self {
        SisWeights {
            nodes: self.nodes.clone(),
            rho: self.rho.iter().map(|r| r * c).collect(),
        }
    }
}

/// Normalized per-instance weights; the weights of each class sum to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassWeights {
    /// Aligned with the training instances the weights were built from.
    pub weights: Vec<f64>,
    /// `fallback[i]` is set when class `i` had zero total `ρ̂` and received
    /// uniform weights instead.
    pub fallback: Vec<bool>,
}

impl ClassWeights {
    /// `1/|D_i|` for every instance of class `i`.
    pub fn uniform(labels: &[usize], k: usize) -> Result<Self> {
        class_weights_from(&vec![1.0; labels.len()], labels, k)
    }

    pub fn any_fallback(&self) -> bool {
        self.fallback.iter().any(|&f| f)
    }
}

/// Kernel density of `reference` evaluated at each of `eval`:
/// `mean_{x′ ∈ reference} κ(x, x′)`.
pub fn kde_density(g: &Graph, eval: &[usize], reference: &[usize], kernel: &VertexKernel) -> Result<Vec<f64>> {
    if reference.is_empty() {
        return Err(Error::Empty("reference set"));
    }
    if kernel.is_constant() {
        kernel.validate()?;
        return Ok(vec![1.0; eval.len()]);
    }
    Ok(kernel.evaluate(g, eval, reference)?.row_means())
}

/// `ρ̂(x) = q̂(x) / max(p̂(x), floor)` for every training node, with `q̂` the
/// density of the test nodes under `q_kernel` and `p̂` the density of the
/// training nodes under `p_kernel`.
pub fn density_ratio(
    g: &Graph,
    train: &[usize],
    test: &[usize],
    q_kernel: &VertexKernel,
    p_kernel: &VertexKernel,
    floor: f64,
) -> Result<SisWeights> {
    if train.is_empty() {
        return Err(Error::Empty("training node set"));
    }
    if test.is_empty() {
        return Err(Error::Empty("test node set"));
    }
    if !(floor >= 0.0 && floor.is_finite()) {
        return Err(Error::param("floor", format!("must be >= 0, got {floor}")));
    }
    let q = kde_density(g, train, test, q_kernel)?;
    let p = kde_density(g, train, train, p_kernel)?;
    let rho = q
        .iter()
        .zip(&p)
        .map(|(&qx, &px)| {
            let denom = px.max(floor);
            if denom > 0.0 {
                Ok(qx / denom)
            } else if qx == 0.0 {
                Ok(0.0)
            } else {
                Err(Error::InvalidInput("zero training density with zero floor".into()))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SisWeights {
        nodes: train.to_vec(),
        rho,
    })
}

/// Normalizes `w.rho` within each class. `labels` is aligned with `w.nodes`.
///
/// A class whose weights are all zero gets uniform weights and a fallback
/// flag.
pub fn class_weights(w: &SisWeights, labels: &[usize], k: usize) -> Result<ClassWeights> {
    if labels.len() != w.rho.len() {
        return Err(Error::DimensionMismatch {
            expected: w.rho.len(),
            got: labels.len(),
        });
    }
    class_weights_from(&w.rho, labels, k)
}

fn class_weights_from(rho: &[f64], labels: &[usize], k: usize) -> Result<ClassWeights> {
    if rho.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(Error::InvalidInput(
            "importance weights must be finite and non-negative".into(),
        ));
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (pos, &y) in labels.iter().enumerate() {
        if y >= k {
            return Err(Error::InvalidInput(format!("label {y} out of range for K={k}")));
        }
        members[y].push(pos);
    }
    let scale = 2f64.powi(WEIGHT_BITS);
    let mut weights = vec![0.0; rho.len()];
    let mut fallback = vec![false; k];
    for (class, idx) in members.iter().enumerate() {
        if idx.is_empty() {
            return Err(Error::MissingClass(class));
        }
        let max = idx.iter().map(|&i| rho[i]).fold(0.0, f64::max);
        if max == 0.0 {
            fallback[class] = true;
            let u = 1.0 / idx.len() as f64;
            for &i in idx {
                weights[i] = u;
            }
            continue;
        }
        // Grid values are exact multiples of 2^-32 in [0, 1], so their sum is exact.
        let snapped: Vec<f64> = idx.iter().map(|&i| (rho[i] / max * scale).round() / scale).collect();
        let total: f64 = snapped.iter().sum();
        for (&i, s) in idx.iter().zip(snapped) {
            weights[i] = s / total;
        }
    }
    Ok(ClassWeights { weights, fallback })
}
