mod common;

use std::collections::HashSet;

use common::{random_graph, rng};
use graphquant::graph::{load_graph, save_graph};
use graphquant::metrics::{mean, standard_error, welch_greater};
use graphquant::samplers::{sample, Protocol, SamplePlan};
use graphquant::synthetic::{cluster_graph, ClusterGraphParams};
use graphquant::{make_split, Graph};
use rand::seq::IndexedRandom;

fn two_clusters() -> Graph {
    cluster_graph(&ClusterGraphParams {
        num_classes: 2,
        nodes_per_class: 150,
        p_in: 0.05,
        p_out: 0.002,
        seed: 4,
        ..ClusterGraphParams::default()
    })
    .unwrap()
    .graph
}

fn mean_pairwise_distance(g: &Graph, nodes: &[usize]) -> f64 {
    let mut total = 0.0;
    let mut pairs = 0.0;
    for (i, &u) in nodes.iter().enumerate() {
        let dist = g.bfs_distances(u);
        for &v in &nodes[i + 1..] {
            // Unreachable pairs count as `num_nodes` hops.
            total += dist[v].unwrap_or(g.num_nodes()) as f64;
            pairs += 1.0;
        }
    }
    total / pairs
}

#[test]
fn samples_are_duplicate_free_and_inside_the_pool() {
    let g = two_clusters();
    let split = make_split(&g, [0.05, 0.15, 0.80], 1).unwrap();
    let pool: HashSet<usize> = split.quantifier_test_pool.iter().copied().collect();
    for protocol in [Protocol::Pps, Protocol::Rw, Protocol::Bfs] {
        let plan = SamplePlan::new(protocol, 8);
        for s in sample(&g, &split.quantifier_test_pool, &plan).unwrap() {
            let distinct: HashSet<usize> = s.nodes.iter().copied().collect();
            assert_eq!(distinct.len(), s.nodes.len(), "{protocol:?}");
            assert!(distinct.is_subset(&pool), "{protocol:?}");
        }
    }
}

#[test]
fn pps_prevalences_average_to_the_zipf_mean() {
    // Ranks are assigned by a uniform permutation, so the expected prevalence
    // of every class is 1/K.
    let g = two_clusters();
    let pool: Vec<usize> = (0..g.num_nodes()).collect();
    let plan = SamplePlan {
        per_label_starts: 500,
        ..SamplePlan::new(Protocol::Pps, 0)
    };
    let samples = sample(&g, &pool, &plan).unwrap();
    assert_eq!(samples.len(), 1000);
    for c in 0..2 {
        let values: Vec<f64> = samples.iter().map(|s| s.true_prevalence[c]).collect();
        let avg = mean(&values);
        assert!((avg - 0.5).abs() < 1e-2, "class {c}: {avg}");
        assert!((avg - 0.5).abs() < 3.0 * standard_error(&values), "class {c}: {avg}");
    }
}

#[test]
fn structural_samples_are_more_local_than_uniform_ones() {
    let g = two_clusters();
    let pool: Vec<usize> = (0..g.num_nodes()).collect();
    for protocol in [Protocol::Rw, Protocol::Bfs] {
        let plan = SamplePlan {
            n: 30,
            per_label_starts: 25,
            ..SamplePlan::new(protocol, 23)
        };
        let samples = sample(&g, &pool, &plan).unwrap();
        assert_eq!(samples.len(), 50);
        let mut r = rng(99);
        let (mut local, mut uniform) = (Vec::new(), Vec::new());
        for s in &samples {
            local.push(mean_pairwise_distance(&g, &s.nodes));
            let u: Vec<usize> = pool.choose_multiple(&mut r, s.nodes.len()).copied().collect();
            uniform.push(mean_pairwise_distance(&g, &u));
        }
        let p = welch_greater(&uniform, &local).unwrap();
        assert!(mean(&local) < mean(&uniform) && p < 0.05, "{protocol:?}: p = {p}");
    }
}

#[test]
fn same_seed_same_samples() {
    let g = two_clusters();
    let pool: Vec<usize> = (0..g.num_nodes()).collect();
    for protocol in [Protocol::Pps, Protocol::Rw, Protocol::Bfs] {
        let plan = SamplePlan::new(protocol, 5);
        assert_eq!(sample(&g, &pool, &plan).unwrap(), sample(&g, &pool, &plan).unwrap());
    }
}

#[test]
fn graph_save_load_round_trip() {
    let g = random_graph(40, 0.1, 3, 5, &mut rng(2));
    let dir = tempfile::tempdir().unwrap();
    let (e, f, l) = (
        dir.path().join("g.edges"),
        dir.path().join("g.csv"),
        dir.path().join("g.labels"),
    );
    save_graph(&g, &e, Some(&f), Some(&l)).unwrap();
    let back = load_graph(&e, Some(&f), Some(&l)).unwrap();
    let edges = |g: &Graph| g.edges().collect::<HashSet<_>>();
    assert_eq!(back.num_nodes(), g.num_nodes());
    assert_eq!(edges(&back), edges(&g));
    assert_eq!(back.labels(), g.labels());
    assert_eq!(back.features(), g.features());
}
