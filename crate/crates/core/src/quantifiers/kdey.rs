//! KDEy: distribution matching with Gaussian kernel density estimates of the
//! class-conditional posterior distributions, solved by maximum likelihood
//! (KL divergence) over the mixture proportions.
//!
//! Each class density is a weighted mixture of Gaussians centered at the
//! training posteriors of that class. Uniform weights give plain KDEy;
//! importance weights from [`crate::sis`] give the structurally reweighted
//! variant.

use std::f64::consts::PI;

use crate::classifier::PosteriorMatrix;
use crate::simplex;
use crate::sis::ClassWeights;
use crate::{Error, Prevalence, Result};

use super::count::check_training;
use super::{Flag, Outcome, SolverConfig};

pub const DEFAULT_SIGMA: f64 = 0.1;

/// Added to a test point's mixture density when every class density is zero.
pub const DENSITY_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub struct KdeyFit {
    /// Training posteriors per class.
    pub banks: Vec<Vec<Vec<f64>>>,
    /// Per-class instance weights, each summing to one.
    pub weights: Vec<Vec<f64>>,
    pub sigma: f64,
}

impl KdeyFit {
    pub fn fit(train: &PosteriorMatrix, labels: &[usize], sigma: f64, weights: Option<&ClassWeights>) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::param("sigma", format!("must be > 0, got {sigma}")));
        }
        let k = train.num_classes();
        let members = check_training(train.len(), labels, k)?;
        let uniform;
        let w = match weights {
            Some(w) => w,
            None => {
                uniform = ClassWeights::uniform(labels, k)?;
                &uniform
            }
        };
        if w.weights.len() != train.len() {
            return Err(Error::DimensionMismatch {
                expected: train.len(),
                got: w.weights.len(),
            });
        }
        let banks = members
            .iter()
            .map(|idx| idx.iter().map(|&i| train.row(i).to_vec()).collect())
            .collect();
        let weights = members
            .iter()
            .map(|idx| idx.iter().map(|&i| w.weights[i]).collect())
            .collect();
        Ok(KdeyFit { banks, weights, sigma })
    }

    pub fn num_classes(&self) -> usize {
        self.banks.len()
    }

    /// `p̂(s | class) = Σ_x w_x k_σ(s, h(x))` with the `K`-dimensional
    /// Gaussian kernel `k_σ`.
    pub fn density(&self, s: &[f64], class: usize) -> f64 {
        let k = s.len() as f64;
        let norm = (2.0 * PI).powf(k / 2.0) * self.sigma.powf(k);
        let inv = 1.0 / (2.0 * self.sigma * self.sigma);
        let sum: f64 = self.banks[class]
            .iter()
            .zip(&self.weights[class])
            .map(|(c, w)| {
                let d2: f64 = c.iter().zip(s).map(|(a, b)| (a - b) * (a - b)).sum();
                w * (-d2 * inv).exp()
            })
            .sum();
        sum / norm
    }

    /// `likelihoods[x][i] = p̂(h(x) | i)` for every test row.
    pub fn likelihoods(&self, test: &PosteriorMatrix) -> Result<Vec<Vec<f64>>> {
        if test.num_classes() != self.num_classes() {
            return Err(Error::DimensionMismatch {
                expected: self.num_classes(),
                got: test.num_classes(),
            });
        }
        Ok(test
            .rows()
            .iter()
            .map(|s| (0..self.num_classes()).map(|i| self.density(s, i)).collect())
            .collect())
    }

    pub fn quantify(&self, test: &PosteriorMatrix, cfg: &SolverConfig) -> Result<Outcome> {
        Ok(kdey_ml_solve(self, test, cfg)?.outcome)
    }
}

/// `−Σ_x log(Σ_i q_i L[x][i])`, with [`DENSITY_FLOOR`] added to rows whose
/// class densities are all zero.
pub fn negative_log_likelihood(likelihoods: &[Vec<f64>], q: &[f64]) -> f64 {
    -compensated_sum(likelihoods.iter().map(|row| {
        let mix: f64 = row.iter().zip(q).map(|(l, qi)| l * qi).sum();
        if row.iter().all(|l| *l == 0.0) {
            (mix + DENSITY_FLOOR).ln()
        } else {
            mix.max(f64::MIN_POSITIVE).ln()
        }
    }))
}

/// Neumaier summation.
fn compensated_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    for x in xs {
        let t = sum + x;
        carry += if sum.abs() >= x.abs() {
            (sum - t) + x
        } else {
            (x - t) + sum
        };
        sum = t;
    }
    sum + carry
}

#[derive(Debug, Clone, PartialEq)]
pub struct KdeySolution {
    pub outcome: Outcome,
    /// Objective at the initial point and after every EM iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

/// Maximum-likelihood mixture proportions by EM, started from the uniform
/// prevalence. Stops when no proportion moves by more than `cfg.tol`, when an
/// update fails to lower the objective (the step is then discarded), or after
/// `cfg.max_iters` iterations.
pub fn kdey_ml_solve(fit: &KdeyFit, test: &PosteriorMatrix, cfg: &SolverConfig) -> Result<KdeySolution> {
    if test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let lik = fit.likelihoods(test)?;
    Ok(em_proportions(&lik, cfg))
}

/// EM on a fixed likelihood matrix.
pub fn em_proportions(lik: &[Vec<f64>], cfg: &SolverConfig) -> KdeySolution {
    let k = lik.first().map_or(0, Vec::len);
    let mut flags = Vec::new();
    // Rows with zero density everywhere carry no information about q.
    let active: Vec<&Vec<f64>> = lik.iter().filter(|r| r.iter().any(|l| *l > 0.0)).collect();
    if active.len() < lik.len() {
        flags.push(Flag::DensityFloor);
    }
    let mut q = vec![1.0 / k as f64; k];
    let mut trace = vec![negative_log_likelihood(lik, &q)];
    let mut iterations = 0;
    let mut converged = active.is_empty();
    while !converged && iterations < cfg.max_iters {
        let mut next = vec![0.0; k];
        for row in &active {
            let mix: f64 = row.iter().zip(&q).map(|(l, qi)| l * qi).sum();
            for i in 0..k {
                next[i] += q[i] * row[i] / mix;
            }
        }
        let n = active.len() as f64;
        for v in &mut next {
            *v /= n;
        }
        let moved = next.iter().zip(&q).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let objective = negative_log_likelihood(lik, &next);
        // An exact EM step never raises the objective; a rise is rounding
        // noise at the optimum.
        if objective > *trace.last().expect("trace starts non-empty") {
            converged = true;
            break;
        }
        q = next;
        iterations += 1;
        trace.push(objective);
        converged = moved < cfg.tol;
    }
    if !converged {
        flags.push(Flag::NotConverged);
    }
    let prevalence = Prevalence::from_weights(&q).unwrap_or_else(|_| Prevalence::uniform(k));
    KdeySolution {
        outcome: Outcome { prevalence, flags },
        objective_trace: trace,
        iterations,
    }
}

/// Projected-gradient minimization of the same objective; used to cross-check
/// the EM solution.
pub fn kdey_ml_solve_pg(fit: &KdeyFit, test: &PosteriorMatrix, cfg: &SolverConfig) -> Result<(Prevalence, f64)> {
    if test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let lik = fit.likelihoods(test)?;
    let k = fit.num_classes();
    let f = |q: &[f64]| negative_log_likelihood(&lik, q);
    let grad = |q: &[f64]| {
        let mut g = vec![0.0; k];
        for row in &lik {
            let mix: f64 = row.iter().zip(q).map(|(l, qi)| l * qi).sum::<f64>();
            if mix <= 0.0 {
                continue;
            }
            for i in 0..k {
                g[i] -= row[i] / mix;
            }
        }
        g
    };
    let min = simplex::minimize(f, grad, &vec![1.0 / k as f64; k], cfg.max_iters, cfg.tol);
    Ok((Prevalence::from_weights(&min.x)?, min.value))
}
