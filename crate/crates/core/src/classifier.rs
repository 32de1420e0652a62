//! Node classifiers producing posterior vectors on the simplex.
//!
//! The built-in model is multinomial logistic regression trained by
//! full-batch gradient descent. With propagation enabled, the logits of all
//! nodes are smoothed by `(αI + (1−α)Ā)^L` before the softmax, which turns it
//! into a structure-aware classifier. Posteriors computed elsewhere can be
//! loaded with [`load_posteriors`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Graph, Result};

/// Row-sum tolerance for posterior vectors.
pub const ROW_TOL: f64 = 1e-6;

/// One probability vector per node, in the order the caller requested.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMatrix {
    num_classes: usize,
    rows: Vec<Vec<f64>>,
}

impl PosteriorMatrix {
    /// Validates every row (length `k`, non-negative, sums to one within
    /// [`ROW_TOL`]) and renormalizes it exactly.
    pub fn new(rows: Vec<Vec<f64>>, k: usize) -> Result<Self> {
        let rows = rows
            .into_iter()
            .enumerate()
            .map(|(i, row)| check_row(row, k).map_err(|msg| Error::InvalidInput(format!("posterior row {i}: {msg}"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(PosteriorMatrix { num_classes: k, rows })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    /// Rows at the given positions.
    pub fn select(&self, idx: &[usize]) -> PosteriorMatrix {
        PosteriorMatrix {
            num_classes: self.num_classes,
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    /// Argmax per row; ties go to the lowest class id.
    pub fn hard_predictions(&self) -> Vec<usize> {
        self.rows.iter().map(|r| argmax(r)).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(path)
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn check_row(mut row: Vec<f64>, k: usize) -> std::result::Result<Vec<f64>, String> {
    if row.len() != k {
        return Err(format!("expected {k} columns, got {}", row.len()));
    }
    if let Some(v) = row.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(format!("negative or non-finite entry {v}"));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_TOL {
        return Err(format!("row sum {sum} is not 1"));
    }
    for v in &mut row {
        *v /= sum;
    }
    Ok(row)
}

/// Reads a headerless posterior CSV with `expected_k` columns.
pub fn load_posteriors(path: &Path, expected_k: usize) -> Result<PosteriorMatrix> {
    let rows = crate::graph::read_real_csv(path)?;
    let rows = rows
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            check_row(row, expected_k).map_err(|msg| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PosteriorMatrix {
        num_classes: expected_k,
        rows,
    })
}

/// Like [`load_posteriors`], taking the class count from the first row.
pub fn load_posteriors_inferred(path: &Path) -> Result<PosteriorMatrix> {
    let k = crate::graph::read_real_csv(path)?
        .first()
        .map(Vec::len)
        .ok_or(Error::Empty("posterior file"))?;
    load_posteriors(path, k)
}

/// Logit smoothing `(αI + (1−α)Ā)^steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Propagation {
    pub alpha: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
    /// Standard deviation of the random weight initialization; zero gives a
    /// zero-initialized model.
    pub init_scale: f64,
    pub propagation: Option<Propagation>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.5,
            epochs: 300,
            l2: 1e-3,
            seed: 0,
            init_scale: 0.0,
            propagation: None,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::param("learning_rate", "must be > 0"));
        }
        if self.l2.is_nan() || self.l2 < 0.0 {
            return Err(Error::param("l2", "must be >= 0"));
        }
        if let Some(p) = self.propagation {
            if !(p.alpha > 0.0 && p.alpha <= 1.0) {
                return Err(Error::param("propagation.alpha", "must lie in (0,1]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    /// `d × K`.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub propagation: Option<Propagation>,
    pub config: TrainConfig,
}

/// Gradient with respect to [`LogisticModel::weights`] and
/// [`LogisticModel::bias`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

impl LogisticModel {
    pub fn zeros(dim: usize, k: usize, config: TrainConfig) -> Self {
        LogisticModel {
            weights: vec![vec![0.0; k]; dim],
            bias: vec![0.0; k],
            propagation: config.propagation,
            config,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.bias.len()
    }

    fn features<'g>(&self, g: &'g Graph) -> Result<&'g crate::graph::Features> {
        let f = g
            .features()
            .ok_or_else(|| Error::InvalidInput("graph has no features".into()))?;
        if f.dim() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                got: f.dim(),
            });
        }
        Ok(f)
    }

    fn raw_logit(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.bias.clone();
        for (xj, wj) in x.iter().zip(&self.weights) {
            for (zk, w) in z.iter_mut().zip(wj) {
                *zk += xj * w;
            }
        }
        z
    }

    /// Logits of the requested nodes, after propagation when enabled.
    fn logits(&self, g: &Graph, nodes: &[usize]) -> Result<Vec<Vec<f64>>> {
        let f = self.features(g)?;
        match self.propagation {
            None => Ok(nodes.iter().map(|&u| self.raw_logit(f.row(u))).collect()),
            Some(p) => {
                let all: Vec<Vec<f64>> = (0..g.num_nodes()).map(|u| self.raw_logit(f.row(u))).collect();
                let smoothed = propagate_columns(g, &all, |col| g.lazy_walk(col, p.alpha, p.steps));
                Ok(nodes.iter().map(|&u| smoothed[u].clone()).collect())
            }
        }
    }

    /// Posterior vectors for `nodes`.
    pub fn predict_proba(&self, g: &Graph, nodes: &[usize]) -> Result<PosteriorMatrix> {
        if let Some(&bad) = nodes.iter().find(|&&u| u >= g.num_nodes()) {
            return Err(Error::InvalidInput(format!("node {bad} out of range")));
        }
        let rows = self.logits(g, nodes)?.iter().map(|z| softmax(z)).collect();
        Ok(PosteriorMatrix {
            num_classes: self.num_classes(),
            rows,
        })
    }

    /// Mean cross-entropy over `train` plus `l2/2·‖W‖²`, and its gradient.
    pub fn loss_and_gradient(&self, g: &Graph, train: &[usize], labels: &[usize]) -> Result<(f64, Gradient)> {
        let f = self.features(g)?;
        let k = self.num_classes();
        let n = train.len() as f64;
        let (rows, logits): (Vec<usize>, Vec<Vec<f64>>) = match self.propagation {
            None => (train.to_vec(), self.logits(g, train)?),
            Some(_) => (
                (0..g.num_nodes()).collect(),
                self.logits(g, &(0..g.num_nodes()).collect::<Vec<_>>())?,
            ),
        };

        // dLoss/dlogit for every row in `rows` (post-propagation).
        let mut grad_logits = vec![vec![0.0; k]; rows.len()];
        let mut loss = 0.0;
        for (t, &u) in train.iter().enumerate() {
            let pos = if self.propagation.is_some() { u } else { t };
            let p = softmax(&logits[pos]);
            let y = labels[u];
            loss -= p[y].max(f64::MIN_POSITIVE).ln() / n;
            for c in 0..k {
                grad_logits[pos][c] += (p[c] - if c == y { 1.0 } else { 0.0 }) / n;
            }
        }
        if let Some(p) = self.propagation {
            grad_logits = propagate_columns(g, &grad_logits, |col| g.lazy_walk_transpose(col, p.alpha, p.steps));
        }

        let mut gw: Vec<Vec<f64>> = self
            .weights
            .iter()
            .map(|row| row.iter().map(|w| self.config.l2 * w).collect())
            .collect();
        let mut gb = vec![0.0; k];
        for (pos, &u) in rows.iter().enumerate() {
            let dz = &grad_logits[pos];
            if dz.iter().all(|v| *v == 0.0) {
                continue;
            }
            for (j, &xj) in f.row(u).iter().enumerate() {
                for c in 0..k {
                    gw[j][c] += xj * dz[c];
                }
            }
            for c in 0..k {
                gb[c] += dz[c];
            }
        }
        let reg: f64 = self.weights.iter().flatten().map(|w| w * w).sum::<f64>() * self.config.l2 / 2.0;
        Ok((loss + reg, Gradient { weights: gw, bias: gb }))
    }
}

/// Applies `op` to each class column of a row-major node × K matrix.
fn propagate_columns(g: &Graph, m: &[Vec<f64>], op: impl Fn(&[f64]) -> Vec<f64>) -> Vec<Vec<f64>> {
    let k = m.first().map_or(0, Vec::len);
    let mut out = vec![vec![0.0; k]; g.num_nodes()];
    for c in 0..k {
        let col: Vec<f64> = m.iter().map(|row| row[c]).collect();
        for (u, v) in op(&col).into_iter().enumerate() {
            out[u][c] = v;
        }
    }
    out
}

/// Trains a logistic model on the labeled nodes `train`.
pub fn fit(g: &Graph, train: &[usize], config: &TrainConfig) -> Result<LogisticModel> {
    use rand_distr::{Distribution, Normal};

    config.validate()?;
    let f = g
        .features()
        .ok_or_else(|| Error::InvalidInput("graph has no features".into()))?;
    let labels = g.require_labels()?;
    if train.is_empty() {
        return Err(Error::Empty("classifier training set"));
    }
    let k = g.num_classes();
    let first = labels[train[0]];
    if train.iter().all(|&u| labels[u] == first) {
        return Err(Error::InvalidInput("training set contains a single class".into()));
    }

    let mut model = LogisticModel::zeros(f.dim(), k, config.clone());
    if config.init_scale > 0.0 {
        let normal = Normal::new(0.0, config.init_scale).map_err(|e| Error::param("init_scale", e.to_string()))?;
        let mut rng = crate::rng::derived(config.seed, 1);
        for w in model.weights.iter_mut().flatten() {
            *w = normal.sample(&mut rng);
        }
    }
    for _ in 0..config.epochs {
        let (_, grad) = model.loss_and_gradient(g, train, labels)?;
        for (row, grow) in model.weights.iter_mut().zip(&grad.weights) {
            for (w, gw) in row.iter_mut().zip(grow) {
                *w -= config.learning_rate * gw;
            }
        }
        for (b, gb) in model.bias.iter_mut().zip(&grad.bias) {
            *b -= config.learning_rate * gb;
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Features;

    fn toy() -> Graph {
        let feats = vec![
            vec![-2.0, 0.1],
            vec![-1.5, -0.3],
            vec![-1.0, 0.2],
            vec![1.0, 0.0],
            vec![1.7, -0.2],
            vec![2.2, 0.4],
        ];
        Graph::new(
            6,
            &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)],
            Some(Features::from_rows(feats).unwrap()),
            Some(vec![0, 0, 0, 1, 1, 1]),
        )
        .unwrap()
    }

    #[test]
    fn separable_training_accuracy() {
        let g = toy();
        let train: Vec<usize> = (0..6).collect();
        let m = fit(&g, &train, &TrainConfig::default()).unwrap();
        let preds = m.predict_proba(&g, &train).unwrap().hard_predictions();
        assert_eq!(preds, vec![0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn zero_epochs_uniform() {
        let g = toy();
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        let m = fit(&g, &[0, 5], &cfg).unwrap();
        let p = m.predict_proba(&g, &[0, 3]).unwrap();
        assert!(p.rows().iter().flatten().all(|&v| v == 0.5));
    }

    #[test]
    fn rows_sum_to_one() {
        let g = toy();
        let mut m = LogisticModel::zeros(2, 2, TrainConfig::default());
        m.weights = vec![vec![3.0, -1.0], vec![0.5, 7.0]];
        m.bias = vec![0.2, -0.4];
        for row in m.predict_proba(&g, &[0, 1, 2, 3, 4, 5]).unwrap().rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn alpha_one_propagation_is_identity() {
        let g = toy();
        let mut m = LogisticModel::zeros(2, 2, TrainConfig::default());
        m.weights = vec![vec![0.3, -1.0], vec![0.5, 0.7]];
        let plain = m.predict_proba(&g, &[0, 2, 4]).unwrap();
        m.propagation = Some(Propagation { alpha: 1.0, steps: 5 });
        assert_eq!(plain, m.predict_proba(&g, &[0, 2, 4]).unwrap());
    }

    #[test]
    fn errors() {
        let g = toy();
        assert!(fit(&g, &[0, 1], &TrainConfig::default()).is_err());
        let bare = Graph::new(2, &[], None, Some(vec![0, 1])).unwrap();
        assert!(fit(&bare, &[0, 1], &TrainConfig::default()).is_err());
        let m = LogisticModel::zeros(3, 2, TrainConfig::default());
        assert!(matches!(
            m.predict_proba(&g, &[0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn posterior_row_validation() {
        assert!(PosteriorMatrix::new(vec![vec![0.2, 0.8]], 2).is_ok());
        assert!(PosteriorMatrix::new(vec![vec![0.5, 0.6]], 2).is_err());
        assert!(PosteriorMatrix::new(vec![vec![-0.1, 1.1]], 2).is_err());
        assert!(PosteriorMatrix::new(vec![vec![1.0]], 2).is_err());
        let p = PosteriorMatrix::new(vec![vec![0.3333333, 0.6666666]], 2).unwrap();
        assert!((p.row(0).iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn argmax_ties_lowest() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
    }
}
