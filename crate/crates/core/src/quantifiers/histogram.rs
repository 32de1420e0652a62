//! Histogram-based distribution matching with the Hellinger distance: binary
//! HDy and its two multi-class aggregations.

use serde::{Deserialize, Serialize};

use crate::classifier::PosteriorMatrix;
use crate::simplex;
use crate::{Error, Prevalence, Result};

use super::count::check_training;
use super::{Flag, Outcome, SolverConfig};

pub const DEFAULT_BINS: usize = 8;

/// `HD(p, q) = ‖√p − √q‖₂ / √2`.
pub fn hellinger(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            got: q.len(),
        });
    }
    let sq: f64 = p
        .iter()
        .zip(q)
        .map(|(a, b)| {
            let d = a.sqrt() - b.sqrt();
            d * d
        })
        .sum();
    Ok((sq / 2.0).sqrt())
}

/// Normalized `bins`-bin histogram of values in `[0, 1]`.
fn histogram(values: impl Iterator<Item = f64>, bins: usize) -> Vec<f64> {
    let mut h = vec![0.0; bins];
    let mut n = 0usize;
    for v in values {
        let b = ((v * bins as f64).floor() as usize).min(bins - 1);
        h[b] += 1.0;
        n += 1;
    }
    if n > 0 {
        for x in &mut h {
            *x /= n as f64;
        }
    }
    h
}

fn check_bins(bins: usize) -> Result<()> {
    if bins == 0 {
        return Err(Error::param("bins", "must be >= 1"));
    }
    Ok(())
}

fn identical(hists: &[Vec<f64>]) -> bool {
    hists
        .windows(2)
        .all(|w| w[0].iter().zip(&w[1]).all(|(a, b)| (a - b).abs() <= 1e-12))
}

/// Binary HDy on the score of class 1 (the positive class).
#[derive(Debug, Clone, PartialEq)]
pub struct HdyFit {
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
    pub bins: usize,
}

impl HdyFit {
    pub fn fit(train: &PosteriorMatrix, labels: &[usize], bins: usize) -> Result<Self> {
        check_bins(bins)?;
        if train.num_classes() != 2 {
            return Err(Error::InvalidInput(format!(
                "HDy needs K=2, got K={}",
                train.num_classes()
            )));
        }
        let members = check_training(train.len(), labels, 2)?;
        let hist = |class: usize| histogram(members[class].iter().map(|&i| train.row(i)[1]), bins);
        Ok(HdyFit {
            positive: hist(1),
            negative: hist(0),
            bins,
        })
    }

    /// Grid search over `α ∈ {0, 1/G, …, 1}`; ties go to the smallest `α`.
    pub fn quantify(&self, test: &PosteriorMatrix, grid: usize) -> Result<Outcome> {
        if test.is_empty() {
            return Err(Error::Empty("test set"));
        }
        if test.num_classes() != 2 {
            return Err(Error::InvalidInput("HDy needs K=2".into()));
        }
        if grid == 0 {
            return Err(Error::param("solver.grid", "must be >= 1"));
        }
        let target = histogram(test.rows().iter().map(|r| r[1]), self.bins);
        let mut best = (f64::INFINITY, 0.0);
        for step in 0..=grid {
            let alpha = step as f64 / grid as f64;
            let mix: Vec<f64> = self
                .positive
                .iter()
                .zip(&self.negative)
                .map(|(p, n)| alpha * p + (1.0 - alpha) * n)
                .collect();
            let d = hellinger(&mix, &target)?;
            if d < best.0 {
                best = (d, alpha);
            }
        }
        let mut flags = Vec::new();
        if identical(&[self.positive.clone(), self.negative.clone()]) {
            flags.push(Flag::Unidentifiable);
        }
        Ok(Outcome {
            prevalence: Prevalence::new(vec![1.0 - best.1, best.1])?,
            flags,
        })
    }
}

pub fn hdy_binary(
    train: &PosteriorMatrix,
    labels: &[usize],
    test: &PosteriorMatrix,
    bins: usize,
    grid: usize,
) -> Result<Outcome> {
    HdyFit::fit(train, labels, bins)?.quantify(test, grid)
}

/// How per-dimension histograms are combined into one per class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// `(p_{1,i}, …, p_{K,i}) / K`, length `bK`.
    Concat,
    /// `Σ_j p_{j,i} / K`, length `b`.
    Average,
}

fn aggregate(per_dim: &[Vec<f64>], aggregation: Aggregation) -> Vec<f64> {
    let k = per_dim.len() as f64;
    match aggregation {
        Aggregation::Concat => per_dim.iter().flatten().map(|v| v / k).collect(),
        Aggregation::Average => {
            let bins = per_dim[0].len();
            (0..bins)
                .map(|b| per_dim.iter().map(|h| h[b]).sum::<f64>() / k)
                .collect()
        }
    }
}

fn per_dimension(rows: &[&[f64]], k: usize, bins: usize) -> Vec<Vec<f64>> {
    (0..k).map(|j| histogram(rows.iter().map(|r| r[j]), bins)).collect()
}

/// Multi-class histogram distribution matching.
#[derive(Debug, Clone, PartialEq)]
pub struct DmHistogramFit {
    /// One aggregated histogram per class.
    pub class_hists: Vec<Vec<f64>>,
    pub bins: usize,
    pub aggregation: Aggregation,
}

impl DmHistogramFit {
    pub fn fit(train: &PosteriorMatrix, labels: &[usize], bins: usize, aggregation: Aggregation) -> Result<Self> {
        check_bins(bins)?;
        let k = train.num_classes();
        if k < 2 {
            return Err(Error::InvalidInput("distribution matching needs K >= 2".into()));
        }
        let members = check_training(train.len(), labels, k)?;
        let class_hists = members
            .iter()
            .map(|idx| {
                let rows: Vec<&[f64]> = idx.iter().map(|&i| train.row(i)).collect();
                aggregate(&per_dimension(&rows, k, bins), aggregation)
            })
            .collect();
        Ok(DmHistogramFit {
            class_hists,
            bins,
            aggregation,
        })
    }

    /// Minimizes `HD(Σ_i q_i p̂_i, q̂)` over the simplex.
    ///
    /// Uses `HD² = 1 − Σ_b √(q̂_b m_b)` for histograms summing to one, which is
    /// convex in `q`.
    pub fn quantify(&self, test: &PosteriorMatrix, cfg: &SolverConfig) -> Result<Outcome> {
        let k = self.class_hists.len();
        if test.is_empty() {
            return Err(Error::Empty("test set"));
        }
        if test.num_classes() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: test.num_classes(),
            });
        }
        if identical(&self.class_hists) {
            return Ok(Outcome {
                prevalence: Prevalence::uniform(k),
                flags: vec![Flag::Unidentifiable],
            });
        }
        let rows: Vec<&[f64]> = test.rows().iter().map(Vec::as_slice).collect();
        let target = aggregate(&per_dimension(&rows, k, self.bins), self.aggregation);
        let sqrt_target: Vec<f64> = target.iter().map(|v| v.sqrt()).collect();
        let hists = &self.class_hists;
        let mixture = |q: &[f64]| -> Vec<f64> {
            (0..target.len())
                .map(|b| hists.iter().zip(q).map(|(h, qi)| qi * h[b]).sum::<f64>())
                .collect()
        };
        let f = |q: &[f64]| {
            let m = mixture(q);
            1.0 - m.iter().zip(&sqrt_target).map(|(mb, st)| st * mb.sqrt()).sum::<f64>()
        };
        let grad = |q: &[f64]| {
            let m = mixture(q);
            (0..k)
                .map(|i| {
                    -m.iter()
                        .zip(&sqrt_target)
                        .zip(&hists[i])
                        .filter(|((_, st), _)| **st > 0.0)
                        .map(|((mb, st), h)| st * h / (2.0 * mb.max(1e-12).sqrt()))
                        .sum::<f64>()
                })
                .collect()
        };
        let min = simplex::minimize(f, grad, &vec![1.0 / k as f64; k], cfg.max_iters, cfg.tol);
        let mut flags = Vec::new();
        if simplex::rank(hists, 1e-10) < k {
            flags.push(Flag::Unidentifiable);
        }
        if !min.converged {
            flags.push(Flag::NotConverged);
        }
        Ok(Outcome {
            prevalence: Prevalence::from_weights(&min.x)?,
            flags,
        })
    }
}

pub fn dm_histogram_multiclass(
    train: &PosteriorMatrix,
    labels: &[usize],
    test: &PosteriorMatrix,
    bins: usize,
    aggregation: Aggregation,
    cfg: &SolverConfig,
) -> Result<Outcome> {
    DmHistogramFit::fit(train, labels, bins, aggregation)?.quantify(test, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pm(scores: &[f64]) -> PosteriorMatrix {
        PosteriorMatrix::new(scores.iter().map(|&s| vec![1.0 - s, s]).collect(), 2).unwrap()
    }

    #[test]
    fn hellinger_examples() {
        assert_eq!(hellinger(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_abs_diff_eq!(hellinger(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0, epsilon = 1e-15);
        // sqrt((1 − √0.5)² + 0.5) / √2
        assert_abs_diff_eq!(hellinger(&[1.0, 0.0], &[0.5, 0.5]).unwrap(), 0.5412, epsilon = 1e-4);
        assert!(hellinger(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn hdy_exact_positive_match() {
        let train = pm(&[0.1, 0.2, 0.15, 0.9, 0.8, 0.95]);
        let labels = [0, 0, 0, 1, 1, 1];
        let test = pm(&[0.9, 0.8, 0.95]);
        let out = hdy_binary(&train, &labels, &test, 8, 1000).unwrap();
        assert_eq!(out.prevalence.as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn hdy_half_mixture() {
        let train = pm(&[0.05, 0.1, 0.9, 0.95]);
        let test = pm(&[0.06, 0.93]);
        let out = hdy_binary(&train, &[0, 0, 1, 1], &test, 8, 1000).unwrap();
        assert!((out.prevalence[1] - 0.5).abs() <= 1e-3);
    }

    #[test]
    fn hdy_identical_classes_tie_to_zero() {
        let train = pm(&[0.3, 0.6, 0.3, 0.6]);
        let test = pm(&[0.3]);
        let out = hdy_binary(&train, &[0, 0, 1, 1], &test, 8, 1000).unwrap();
        assert_eq!(out.prevalence.as_slice(), &[1.0, 0.0]);
        assert_eq!(out.flags, vec![Flag::Unidentifiable]);
    }

    #[test]
    fn hdy_rejects_multiclass() {
        let train = PosteriorMatrix::new(vec![vec![1.0, 0.0, 0.0]], 3).unwrap();
        assert!(HdyFit::fit(&train, &[0], 8).is_err());
    }

    #[test]
    fn dm_identical_classes_uniform() {
        let train = PosteriorMatrix::new(vec![vec![0.2, 0.3, 0.5]; 3], 3).unwrap();
        let test = PosteriorMatrix::new(vec![vec![0.2, 0.3, 0.5]], 3).unwrap();
        let out = dm_histogram_multiclass(
            &train,
            &[0, 1, 2],
            &test,
            8,
            Aggregation::Average,
            &SolverConfig::default(),
        )
        .unwrap();
        assert_eq!(out.prevalence, Prevalence::uniform(3));
        assert_eq!(out.flags, vec![Flag::Unidentifiable]);
    }

    #[test]
    fn aggregation_shapes() {
        let per_dim = vec![vec![0.5, 0.5], vec![1.0, 0.0]];
        assert_eq!(aggregate(&per_dim, Aggregation::Concat), vec![0.25, 0.25, 0.5, 0.0]);
        assert_eq!(aggregate(&per_dim, Aggregation::Average), vec![0.75, 0.25]);
    }
}
