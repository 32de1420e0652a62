//! Classify-and-count and adjusted-count estimators.

use crate::classifier::PosteriorMatrix;
use crate::simplex;
use crate::sis::ClassWeights;
use crate::{Error, Prevalence, Result};

use super::{Flag, Outcome, SolverConfig};

/// Relative frequencies of hard predictions.
pub fn cc(predictions: &[usize], k: usize) -> Result<Prevalence> {
    if predictions.is_empty() {
        return Err(Error::Empty("test set"));
    }
    Prevalence::from_labels(predictions.iter().copied(), k)
}

/// Mean posterior vector.
pub fn pcc(posteriors: &PosteriorMatrix) -> Result<Prevalence> {
    if posteriors.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let mut mean = vec![0.0; posteriors.num_classes()];
    for row in posteriors.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    let n = posteriors.len() as f64;
    for m in &mut mean {
        *m /= n;
    }
    Prevalence::from_weights(&mean)
}

/// Solves `confusion · q = observed` in the least-squares sense over the
/// simplex. `confusion[j][i]` is `P(Ŷ = j | Y = i)`.
///
/// A rank-deficient confusion matrix still yields a minimizer on the simplex
/// but sets [`Flag::Unidentifiable`].
pub fn acc_adjust(confusion: &[Vec<f64>], observed: &Prevalence, cfg: &SolverConfig) -> Result<Outcome> {
    let k = observed.num_classes();
    if confusion.len() != k || confusion.iter().any(|r| r.len() != k) {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: confusion.len(),
        });
    }
    for i in 0..k {
        let col: f64 = confusion.iter().map(|r| r[i]).sum();
        if (col - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidInput(format!(
                "confusion column {i} sums to {col}, expected 1"
            )));
        }
    }
    let obs = observed.as_slice();
    let residual = |q: &[f64]| -> Vec<f64> {
        confusion
            .iter()
            .zip(obs)
            .map(|(row, o)| row.iter().zip(q).map(|(m, qi)| m * qi).sum::<f64>() - o)
            .collect()
    };
    let f = |q: &[f64]| residual(q).iter().map(|r| r * r).sum::<f64>();
    let grad = |q: &[f64]| {
        let r = residual(q);
        (0..k)
            .map(|i| 2.0 * confusion.iter().zip(&r).map(|(row, rj)| row[i] * rj).sum::<f64>())
            .collect()
    };
    let min = simplex::minimize(f, grad, &vec![1.0 / k as f64; k], cfg.max_iters, cfg.tol);
    let mut flags = Vec::new();
    if simplex::rank(confusion, 1e-10) < k {
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

pub(crate) fn check_training(n_rows: usize, labels: &[usize], k: usize) -> Result<Vec<Vec<usize>>> {
    if labels.len() != n_rows {
        return Err(Error::DimensionMismatch {
            expected: n_rows,
            got: labels.len(),
        });
    }
    let mut members = vec![Vec::new(); k];
    for (pos, &y) in labels.iter().enumerate() {
        if y >= k {
            return Err(Error::InvalidInput(format!("label {y} out of range for K={k}")));
        }
        members[y].push(pos);
    }
    if let Some(missing) = members.iter().position(Vec::is_empty) {
        return Err(Error::MissingClass(missing));
    }
    Ok(members)
}

/// Column-conditional confusion matrix of a hard classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct AccFit {
    pub confusion: Vec<Vec<f64>>,
}

impl AccFit {
    pub fn fit(predictions: &[usize], labels: &[usize], k: usize) -> Result<Self> {
        let members = check_training(predictions.len(), labels, k)?;
        let mut confusion = vec![vec![0.0; k]; k];
        for (i, idx) in members.iter().enumerate() {
            for &pos in idx {
                confusion[predictions[pos]][i] += 1.0 / idx.len() as f64;
            }
        }
        Ok(AccFit { confusion })
    }

    pub fn quantify(&self, predictions: &[usize], cfg: &SolverConfig) -> Result<Outcome> {
        acc_adjust(&self.confusion, &cc(predictions, self.confusion.len())?, cfg)
    }
}

/// Soft confusion matrix `M[j][i]` = (weighted) mean of `ŝ_j` over class `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PaccFit {
    pub confusion: Vec<Vec<f64>>,
}

impl PaccFit {
    /// `weights`, when given, are per-instance and sum to one within each
    /// class (see [`crate::sis::class_weights`]); `None` means uniform.
    pub fn fit(train: &PosteriorMatrix, labels: &[usize], weights: Option<&ClassWeights>) -> Result<Self> {
        let k = train.num_classes();
        check_training(train.len(), labels, k)?;
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
        let mut confusion = vec![vec![0.0; k]; k];
        for (pos, row) in train.rows().iter().enumerate() {
            let i = labels[pos];
            for (j, s) in row.iter().enumerate() {
                confusion[j][i] += w.weights[pos] * s;
            }
        }
        Ok(PaccFit { confusion })
    }

    pub fn quantify(&self, test: &PosteriorMatrix, cfg: &SolverConfig) -> Result<Outcome> {
        acc_adjust(&self.confusion, &pcc(test)?, cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pm(rows: &[[f64; 2]]) -> PosteriorMatrix {
        PosteriorMatrix::new(rows.iter().map(|r| r.to_vec()).collect(), 2).unwrap()
    }

    #[test]
    fn cc_and_pcc_examples() {
        assert_eq!(cc(&[0, 0, 1, 1], 2).unwrap().as_slice(), &[0.5, 0.5]);
        assert_eq!(pcc(&pm(&[[1.0, 0.0], [1.0, 0.0]])).unwrap().as_slice(), &[1.0, 0.0]);
        let p = pcc(&pm(&[[0.2, 0.8], [0.6, 0.4]])).unwrap();
        assert_abs_diff_eq!(p[0], 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(p[1], 0.6, epsilon = 1e-12);
        assert!(cc(&[], 2).is_err());
    }

    #[test]
    fn identity_confusion_returns_observed() {
        let obs = Prevalence::new(vec![0.3, 0.2, 0.5]).unwrap();
        let eye: Vec<Vec<f64>> = (0..3)
            .map(|i| (0..3).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let out = acc_adjust(&eye, &obs, &SolverConfig::default()).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(out.prevalence[i], obs[i], epsilon = 1e-9);
        }
        assert!(out.flags.is_empty());
    }

    #[test]
    fn binary_hand_solve() {
        // 0.9q + 0.2(1−q) = 0.62 ⇒ q = 0.6
        let m = vec![vec![0.9, 0.2], vec![0.1, 0.8]];
        let obs = Prevalence::new(vec![0.62, 0.38]).unwrap();
        let out = acc_adjust(&m, &obs, &SolverConfig::default()).unwrap();
        assert_abs_diff_eq!(out.prevalence[0], 0.6, epsilon = 1e-6);
        assert_abs_diff_eq!(out.prevalence[1], 0.4, epsilon = 1e-6);
    }

    #[test]
    fn equal_columns_flagged() {
        let m = vec![vec![0.7, 0.7], vec![0.3, 0.3]];
        let obs = Prevalence::new(vec![0.5, 0.5]).unwrap();
        let out = acc_adjust(&m, &obs, &SolverConfig::default()).unwrap();
        assert!(out.flags.contains(&Flag::Unidentifiable));
        assert!((out.prevalence.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pacc_with_confident_classifier_is_pcc() {
        let train = pm(&[[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        let fit = PaccFit::fit(&train, &[0, 0, 1], None).unwrap();
        assert_eq!(fit.confusion, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let test = pm(&[[0.9, 0.1], [0.3, 0.7]]);
        let q = fit.quantify(&test, &SolverConfig::default()).unwrap().prevalence;
        let p = pcc(&test).unwrap();
        assert_abs_diff_eq!(q[0], p[0], epsilon = 1e-9);
    }

    #[test]
    fn pacc_missing_class() {
        let train = pm(&[[1.0, 0.0], [0.8, 0.2]]);
        assert!(matches!(
            PaccFit::fit(&train, &[0, 0], None),
            Err(Error::MissingClass(1))
        ));
    }

    #[test]
    fn acc_fit_counts() {
        let fit = AccFit::fit(&[0, 1, 1, 1], &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(fit.confusion, vec![vec![0.5, 0.0], vec![0.5, 1.0]]);
    }
}
