//! Quantification error metrics and the significance test used for ranking.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::{Error, Prevalence, Result};

fn check_len(q: &Prevalence, q_hat: &Prevalence) -> Result<()> {
    if q.num_classes() != q_hat.num_classes() {
        return Err(Error::DimensionMismatch {
            expected: q.num_classes(),
            got: q_hat.num_classes(),
        });
    }
    Ok(())
}

/// Absolute error `(1/K) Σ |q_i − q̂_i|`.
pub fn ae(q: &Prevalence, q_hat: &Prevalence) -> Result<f64> {
    check_len(q, q_hat)?;
    let k = q.num_classes() as f64;
    Ok(q.as_slice()
        .iter()
        .zip(q_hat.as_slice())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / k)
}

/// Additive smoothing `(p + ε) / (1 + Kε)` with `ε = 1/(2n)`.
pub fn smooth(p: &Prevalence, n_sample: usize) -> Vec<f64> {
    let eps = 1.0 / (2.0 * n_sample as f64);
    let denom = 1.0 + eps * p.num_classes() as f64;
    p.as_slice().iter().map(|v| (v + eps) / denom).collect()
}

/// Relative absolute error `(1/K) Σ |q̃_i − q̂̃_i| / q̃_i` on smoothed
/// prevalences, so it stays finite when a true prevalence is zero.
pub fn rae(q: &Prevalence, q_hat: &Prevalence, n_sample: usize) -> Result<f64> {
    check_len(q, q_hat)?;
    if n_sample == 0 {
        return Err(Error::param("n_sample", "must be >= 1"));
    }
    let a = smooth(q, n_sample);
    let b = smooth(q_hat, n_sample);
    let k = a.len() as f64;
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs() / x).sum::<f64>() / k)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn standard_error(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    (variance(xs) / xs.len() as f64).sqrt()
}

/// One-sided Welch t-test of `H1: mean(a) > mean(b)`; returns the p-value.
///
/// Needs at least two observations per group. With both variances zero the
/// p-value is 0 when `mean(a) > mean(b)` and 1 otherwise.
pub fn welch_greater(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidInput(
            "Welch test needs >= 2 observations per group".into(),
        ));
    }
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (variance(a) / a.len() as f64, variance(b) / b.len() as f64);
    let se2 = va + vb;
    if se2 == 0.0 {
        return Ok(if ma > mb { 0.0 } else { 1.0 });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (va * va / (a.len() as f64 - 1.0) + vb * vb / (b.len() as f64 - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(1.0 - dist.cdf(t))
}
