//! Planted-cluster graphs for experiments and tests.
//!
//! Each class owns one cluster. Edges appear independently with probability
//! `p_in` inside a cluster and `p_out` between clusters. A fraction of the
//! nodes on cluster boundaries take the label of a neighboring cluster, and
//! features are Gaussian around a per-class mean of the node's label.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::graph::Features;
use crate::{Error, Graph, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterGraphParams {
    pub num_classes: usize,
    pub nodes_per_class: usize,
    pub p_in: f64,
    pub p_out: f64,
    /// Fraction of all nodes that are relabeled; drawn from boundary nodes.
    pub label_noise: f64,
    pub feature_dim: usize,
    /// Distance of each class mean from the origin.
    pub feature_separation: f64,
    pub feature_std: f64,
    pub seed: u64,
}

impl Default for ClusterGraphParams {
    fn default() -> Self {
        ClusterGraphParams {
            num_classes: 3,
            nodes_per_class: 100,
            p_in: 0.1,
            p_out: 0.005,
            label_noise: 0.05,
            feature_dim: 8,
            feature_separation: 1.0,
            feature_std: 1.0,
            seed: 0,
        }
    }
}

/// Generated graph plus the cluster of every node.
#[derive(Debug, Clone)]
pub struct ClusterGraph {
    pub graph: Graph,
    pub clusters: Vec<usize>,
}

pub fn cluster_graph(params: &ClusterGraphParams) -> Result<ClusterGraph> {
    let k = params.num_classes;
    if k < 2 || params.nodes_per_class == 0 {
        return Err(Error::param("num_classes", "need at least two non-empty clusters"));
    }
    for (key, p) in [
        ("p_in", params.p_in),
        ("p_out", params.p_out),
        ("label_noise", params.label_noise),
    ] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::param(key, "must lie in [0,1]"));
        }
    }
    if params.feature_dim < k {
        return Err(Error::param("feature_dim", "must be >= num_classes"));
    }
    let n = k * params.nodes_per_class;
    let clusters: Vec<usize> = (0..n).map(|u| u / params.nodes_per_class).collect();

    let mut rng = crate::rng::derived(params.seed, 0);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if clusters[u] == clusters[v] {
                params.p_in
            } else {
                params.p_out
            };
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }

    let mut cross: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(u, v) in &edges {
        if clusters[u] != clusters[v] {
            cross[u].push(clusters[v]);
            cross[v].push(clusters[u]);
        }
    }
    let mut labels = clusters.clone();
    let boundary: Vec<usize> = (0..n).filter(|&u| !cross[u].is_empty()).collect();
    let flips = ((params.label_noise * n as f64).round() as usize).min(boundary.len());
    for &u in boundary.choose_multiple(&mut rng, flips) {
        if let Some(&other) = cross[u].choose(&mut rng) {
            labels[u] = other;
        }
    }

    let normal = Normal::new(0.0, params.feature_std).map_err(|e| Error::param("feature_std", e.to_string()))?;
    let rows: Vec<Vec<f64>> = labels
        .iter()
        .map(|&y| {
            (0..params.feature_dim)
                .map(|j| {
                    let mean = if j == y { params.feature_separation } else { 0.0 };
                    mean + normal.sample(&mut rng)
                })
                .collect()
        })
        .collect();

    // Every class keeps its cluster core, so all labels remain present.
    let graph = Graph::new(n, &edges, Some(Features::from_rows(rows)?), Some(labels))?;
    Ok(ClusterGraph { graph, clusters })
}
