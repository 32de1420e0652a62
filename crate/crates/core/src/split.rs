//! Random train/quantify/test partitions of the node set.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::{Error, Graph, Result};

/// Classifier-train / quantifier-train / quantifier-test-pool partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub classifier_train: Vec<usize>,
    pub quantifier_train: Vec<usize>,
    pub quantifier_test_pool: Vec<usize>,
    pub seed: u64,
}

impl Split {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::graph::write_file(path, serde_json::to_string_pretty(self)?.as_bytes())
    }

    /// Checks that the three sets partition `0..num_nodes`.
    pub fn validate(&self, num_nodes: usize) -> Result<()> {
        let mut seen = vec![false; num_nodes];
        for &u in self
            .classifier_train
            .iter()
            .chain(&self.quantifier_train)
            .chain(&self.quantifier_test_pool)
        {
            if u >= num_nodes {
                return Err(Error::InvalidInput(format!("split node {u} out of range")));
            }
            if std::mem::replace(&mut seen[u], true) {
                return Err(Error::InvalidInput(format!("split node {u} appears twice")));
            }
        }
        if let Some(u) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidInput(format!("split does not cover node {u}")));
        }
        Ok(())
    }
}

/// Integer sizes for `total` items split by `ratios`: floor every ideal size,
/// then give the leftover items to the largest fractional parts (earlier index
/// wins ties).
pub fn apportion(total: usize, ratios: &[f64]) -> Vec<usize> {
    let ideal: Vec<f64> = ratios.iter().map(|r| r * total as f64).collect();
    let mut sizes: Vec<usize> = ideal.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = ideal[a] - ideal[a].floor();
        let fb = ideal[b] - ideal[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(total.saturating_sub(assigned)) {
        sizes[i] += 1;
    }
    sizes
}

/// Uniformly random partition of the nodes of `g` with sizes given by
/// `ratios`, reproducible for a given `seed`.
pub fn make_split(g: &Graph, ratios: [f64; 3], seed: u64) -> Result<Split> {
    if ratios.iter().any(|r| r.is_nan() || *r <= 0.0) {
        return Err(Error::param("split.ratios", "every ratio must be > 0"));
    }
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::param("split.ratios", format!("ratios must sum to 1, got {sum}")));
    }
    let n = g.num_nodes();
    let sizes = apportion(n, &ratios);
    let mut nodes: Vec<usize> = (0..n).collect();
    nodes.shuffle(&mut crate::rng::derived(seed, 0));

    let mut parts = Vec::with_capacity(3);
    let mut start = 0;
    for size in sizes {
        let mut part = nodes[start..start + size].to_vec();
        part.sort_unstable();
        parts.push(part);
        start += size;
    }
    let quantifier_test_pool = parts.pop().unwrap_or_default();
    let quantifier_train = parts.pop().unwrap_or_default();
    let classifier_train = parts.pop().unwrap_or_default();
    Ok(Split {
        classifier_train,
        quantifier_train,
        quantifier_test_pool,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn empty_graph(n: usize) -> Graph {
        Graph::new(n, &[], None, None).unwrap()
    }

    #[test]
    fn default_ratio_split_sizes() {
        let s = make_split(&empty_graph(1000), [0.05, 0.15, 0.80], 7).unwrap();
        assert_eq!(
            (
                s.classifier_train.len(),
                s.quantifier_train.len(),
                s.quantifier_test_pool.len()
            ),
            (50, 150, 800)
        );
        s.validate(1000).unwrap();
    }

    #[test]
    fn small_split_rounding() {
        let s = make_split(&empty_graph(20), [0.05, 0.15, 0.80], 1).unwrap();
        assert_eq!(
            (
                s.classifier_train.len(),
                s.quantifier_train.len(),
                s.quantifier_test_pool.len()
            ),
            (1, 3, 16)
        );
        // 7 nodes at 1/3 each: 2.33 → floors 2/2/2, leftover to the first.
        assert_eq!(apportion(7, &[1.0 / 3.0; 3]), vec![3, 2, 2]);
    }

    #[test]
    fn same_seed_same_split() {
        let g = empty_graph(100);
        let a = make_split(&g, [0.2, 0.3, 0.5], 42).unwrap();
        assert_eq!(a, make_split(&g, [0.2, 0.3, 0.5], 42).unwrap());
        assert_ne!(a, make_split(&g, [0.2, 0.3, 0.5], 43).unwrap());
    }

    #[test]
    fn rejects_bad_ratios() {
        let g = empty_graph(10);
        assert!(make_split(&g, [0.5, 0.3, 0.3], 0).is_err());
        assert!(make_split(&g, [0.0, 0.5, 0.5], 0).is_err());
    }

    proptest! {
        #[test]
        fn split_partitions_nodes(n in 1usize..300, a in 1u32..100, b in 1u32..100, c in 1u32..100, seed: u64) {
            let t = (a + b + c) as f64;
            let ratios = [a as f64 / t, b as f64 / t, 1.0 - a as f64 / t - b as f64 / t];
            prop_assume!(ratios[2] > 0.0);
            let s = make_split(&empty_graph(n), ratios, seed).unwrap();
            s.validate(n).unwrap();
            let sizes = [s.classifier_train.len(), s.quantifier_train.len(), s.quantifier_test_pool.len()];
            for (size, r) in sizes.iter().zip(ratios) {
                prop_assert!((*size as f64 - r * n as f64).abs() < 1.0);
            }
        }
    }
}
