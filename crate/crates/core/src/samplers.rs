//! Test-sample generators for the three shift protocols.
//!
//! * `pps`: prior probability shift. Each sample has a Zipf-distributed
//!   target prevalence and nodes are drawn uniformly within class.
//! * `rw`: structural shift via teleporting random walks from a start vertex.
//! * `bfs`: structural shift via breadth-first search from a start vertex.
//!
//! Walks and searches traverse the whole graph, but only nodes in the pool are
//! collected. Every sample gets its own RNG stream derived from the plan seed,
//! so output does not depend on how samples are scheduled.

use std::collections::{HashSet, VecDeque};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::split::apportion;
use crate::{Error, Graph, Prevalence, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Pps,
    Rw,
    Bfs,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Pps => "pps",
            Protocol::Rw => "rw",
            Protocol::Bfs => "bfs",
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pps" => Ok(Protocol::Pps),
            "rw" => Ok(Protocol::Rw),
            "bfs" => Ok(Protocol::Bfs),
            other => Err(Error::param("protocol", format!("unknown protocol {other:?}"))),
        }
    }
}

/// JSON form:
/// `{"protocol","n","zipf_s","walk_len","teleport","per_label_starts","seed"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplePlan {
    pub protocol: Protocol,
    #[serde(default = "defaults::n")]
    pub n: usize,
    #[serde(default = "defaults::zipf_s")]
    pub zipf_s: f64,
    #[serde(default = "defaults::walk_len")]
    pub walk_len: usize,
    #[serde(default = "defaults::teleport")]
    pub teleport: f64,
    /// PPS: samples per class (10·K samples in total). RW/BFS: start
    /// vertices per label.
    #[serde(default = "defaults::per_label")]
    pub per_label_starts: usize,
    #[serde(default)]
    pub seed: u64,
}

mod defaults {
    pub fn n() -> usize {
        100
    }
    pub fn zipf_s() -> f64 {
        1.0
    }
    pub fn walk_len() -> usize {
        10
    }
    pub fn teleport() -> f64 {
        0.1
    }
    pub fn per_label() -> usize {
        10
    }
}

/// Upper bound on walks per start vertex.
pub const MAX_WALKS: usize = 10_000;

impl SamplePlan {
    pub fn new(protocol: Protocol, seed: u64) -> Self {
        SamplePlan {
            protocol,
            n: defaults::n(),
            zipf_s: defaults::zipf_s(),
            walk_len: defaults::walk_len(),
            teleport: defaults::teleport(),
            per_label_starts: defaults::per_label(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::param("n", "must be >= 1"));
        }
        if self.zipf_s.is_nan() || self.zipf_s <= 0.0 {
            return Err(Error::param("zipf_s", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.teleport) {
            return Err(Error::param("teleport", "must lie in [0,1]"));
        }
        if self.walk_len == 0 {
            return Err(Error::param("walk_len", "must be >= 1"));
        }
        if self.per_label_starts == 0 {
            return Err(Error::param("per_label_starts", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub protocol: Protocol,
    /// Seed of this sample's RNG stream.
    pub seed: u64,
    pub stream: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSample {
    pub nodes: Vec<usize>,
    pub true_prevalence: Prevalence,
    pub provenance: Provenance,
    /// Fewer than the requested number of nodes could be collected.
    #[serde(default)]
    pub short: bool,
}

pub fn save_samples(samples: &[TestSample], path: &Path) -> Result<()> {
    crate::graph::write_file(path, serde_json::to_string_pretty(samples)?.as_bytes())
}

pub fn load_samples(path: &Path) -> Result<Vec<TestSample>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Zipf prevalence for a fixed assignment of ranks (1-based) to labels:
/// `p_i ∝ rank_i^{−s}`.
pub fn zipf_from_ranks(ranks: &[usize], s: f64) -> Prevalence {
    let w: Vec<f64> = ranks.iter().map(|&r| (r as f64).powf(-s)).collect();
    let total: f64 = w.iter().sum();
    Prevalence::new(w.iter().map(|x| x / total).collect()).unwrap_or_else(|_| Prevalence::uniform(ranks.len()))
}

/// Zipf prevalence with ranks assigned to labels by a uniform permutation.
pub fn zipf_prevalence<R: Rng + ?Sized>(k: usize, s: f64, rng: &mut R) -> Prevalence {
    let mut ranks: Vec<usize> = (1..=k).collect();
    ranks.shuffle(rng);
    zipf_from_ranks(&ranks, s)
}

/// Class counts for a sample of size `n`: largest-remainder rounding of
/// `n·q`, capped by `available`. A class short of nodes hands its deficit to
/// the classes with spare nodes in proportion to their target share.
pub fn class_counts(q: &Prevalence, n: usize, available: &[usize]) -> Result<Vec<usize>> {
    let total: usize = available.iter().sum();
    if n > total {
        return Err(Error::InvalidInput(format!(
            "sample size {n} exceeds pool size {total}"
        )));
    }
    let mut counts = apportion(n, q.as_slice());
    loop {
        let mut deficit = 0;
        for (c, &a) in counts.iter_mut().zip(available) {
            if *c > a {
                deficit += *c - a;
                *c = a;
            }
        }
        if deficit == 0 {
            return Ok(counts);
        }
        let open: Vec<usize> = (0..counts.len()).filter(|&i| counts[i] < available[i]).collect();
        let mut share: Vec<f64> = open.iter().map(|&i| q[i]).collect();
        if share.iter().sum::<f64>() <= 0.0 {
            share = vec![1.0; open.len()];
        }
        let s: f64 = share.iter().sum();
        let ratios: Vec<f64> = share.iter().map(|x| x / s).collect();
        for (&i, extra) in open.iter().zip(apportion(deficit, &ratios)) {
            counts[i] += extra;
        }
    }
}

fn pool_labels<'a>(g: &'a Graph, pool: &[usize]) -> Result<&'a [usize]> {
    if pool.is_empty() {
        return Err(Error::Empty("test pool"));
    }
    if let Some(&bad) = pool.iter().find(|&&u| u >= g.num_nodes()) {
        return Err(Error::InvalidInput(format!("pool node {bad} out of range")));
    }
    g.require_labels()
}

fn realized(nodes: &[usize], labels: &[usize], k: usize) -> Result<Prevalence> {
    Prevalence::from_labels(nodes.iter().map(|&u| labels[u]), k)
}

/// `10·K` (in general `per_label_starts·K`) samples with Zipf prevalences.
pub fn sample_pps(g: &Graph, pool: &[usize], plan: &SamplePlan) -> Result<Vec<TestSample>> {
    plan.validate()?;
    let labels = pool_labels(g, pool)?;
    let k = g.num_classes();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for &u in pool {
        by_class[labels[u]].push(u);
    }
    let available: Vec<usize> = by_class.iter().map(Vec::len).collect();
    if plan.n > pool.len() {
        return Err(Error::InvalidInput(format!(
            "sample size {} exceeds pool size {}",
            plan.n,
            pool.len()
        )));
    }
    (0..plan.per_label_starts * k)
        .into_par_iter()
        .map(|idx| {
            let stream = idx as u64;
            let mut rng = crate::rng::derived(plan.seed, stream);
            let q = zipf_prevalence(k, plan.zipf_s, &mut rng);
            let counts = class_counts(&q, plan.n, &available)?;
            let mut nodes = Vec::with_capacity(plan.n);
            for (members, &c) in by_class.iter().zip(&counts) {
                nodes.extend(members.choose_multiple(&mut rng, c).copied());
            }
            nodes.sort_unstable();
            Ok(TestSample {
                true_prevalence: realized(&nodes, labels, k)?,
                nodes,
                provenance: Provenance {
                    protocol: Protocol::Pps,
                    seed: plan.seed,
                    stream,
                    start: None,
                },
                short: false,
            })
        })
        .collect()
}

/// Start vertices per label, drawn uniformly without replacement from the
/// pool members with that label, in label order.
fn pick_starts(g: &Graph, pool: &[usize], plan: &SamplePlan) -> Result<Vec<usize>> {
    let labels = pool_labels(g, pool)?;
    let k = g.num_classes();
    let mut starts = Vec::new();
    for class in 0..k {
        let members: Vec<usize> = pool.iter().copied().filter(|&u| labels[u] == class).collect();
        if members.is_empty() {
            return Err(Error::InvalidInput(format!(
                "no start vertex available for label {class}"
            )));
        }
        let mut rng = crate::rng::derived(plan.seed, u64::MAX - class as u64);
        starts.extend(members.choose_multiple(&mut rng, plan.per_label_starts.min(members.len())));
    }
    Ok(starts)
}

fn structural_samples(
    g: &Graph,
    pool: &[usize],
    plan: &SamplePlan,
    collect: impl Fn(usize, &HashSet<usize>, &mut rand_chacha::ChaCha8Rng) -> (Vec<usize>, bool) + Sync,
) -> Result<Vec<TestSample>> {
    plan.validate()?;
    let labels = pool_labels(g, pool)?;
    let k = g.num_classes();
    let in_pool: HashSet<usize> = pool.iter().copied().collect();
    let starts = pick_starts(g, pool, plan)?;
    starts
        .par_iter()
        .enumerate()
        .map(|(idx, &start)| {
            let stream = idx as u64;
            let mut rng = crate::rng::derived(plan.seed, stream);
            let (mut nodes, short) = collect(start, &in_pool, &mut rng);
            nodes.sort_unstable();
            Ok(TestSample {
                true_prevalence: realized(&nodes, labels, k)?,
                nodes,
                provenance: Provenance {
                    protocol: plan.protocol,
                    seed: plan.seed,
                    stream,
                    start: Some(start),
                },
                short,
            })
        })
        .collect()
}

/// Pool members within `depth` hops of `start` (including `start`).
fn pool_within(g: &Graph, start: usize, depth: usize, in_pool: &HashSet<usize>) -> usize {
    let mut dist = vec![usize::MAX; g.num_nodes()];
    let mut queue = VecDeque::from([start]);
    dist[start] = 0;
    let mut count = 0;
    while let Some(u) = queue.pop_front() {
        if in_pool.contains(&u) {
            count += 1;
        }
        if dist[u] == depth {
            continue;
        }
        for &v in g.neighbors(u) {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    count
}

/// One sample per start vertex, collected by teleporting random walks.
///
/// Each walk starts at the start vertex and takes `walk_len` steps; a step
/// jumps back to the start with probability `teleport` and otherwise moves to
/// a uniform neighbor. Distinct pool nodes are collected until `n` are found
/// or [`MAX_WALKS`] walks have been run.
pub fn sample_rw(g: &Graph, pool: &[usize], plan: &SamplePlan) -> Result<Vec<TestSample>> {
    structural_samples(g, pool, plan, |start, in_pool, rng| {
        let reachable = pool_within(g, start, plan.walk_len, in_pool);
        let target = plan.n.min(reachable);
        let mut seen = HashSet::new();
        let mut nodes = Vec::new();
        let mut visit = |u: usize, nodes: &mut Vec<usize>| {
            if in_pool.contains(&u) && seen.insert(u) {
                nodes.push(u);
            }
        };
        visit(start, &mut nodes);
        let mut walks = 0;
        while nodes.len() < target && walks < MAX_WALKS {
            walks += 1;
            let mut cur = start;
            for _ in 0..plan.walk_len {
                cur = if rng.random::<f64>() < plan.teleport {
                    start
                } else {
                    *g.neighbors(cur).choose(rng).unwrap_or(&start)
                };
                visit(cur, &mut nodes);
                if nodes.len() == target {
                    break;
                }
            }
        }
        let short = nodes.len() < plan.n;
        (nodes, short)
    })
}

/// One sample per start vertex, collected in BFS layer order (uniformly
/// shuffled within each layer) and truncated at `n`.
pub fn sample_bfs(g: &Graph, pool: &[usize], plan: &SamplePlan) -> Result<Vec<TestSample>> {
    structural_samples(g, pool, plan, |start, in_pool, rng| {
        let mut visited = vec![false; g.num_nodes()];
        visited[start] = true;
        let mut layer = vec![start];
        let mut nodes = Vec::new();
        'outer: while !layer.is_empty() {
            layer.shuffle(rng);
            for &u in &layer {
                if in_pool.contains(&u) {
                    nodes.push(u);
                    if nodes.len() == plan.n {
                        break 'outer;
                    }
                }
            }
            let mut next = Vec::new();
            for &u in &layer {
                for &v in g.neighbors(u) {
                    if !visited[v] {
                        visited[v] = true;
                        next.push(v);
                    }
                }
            }
            next.sort_unstable();
            layer = next;
        }
        let short = nodes.len() < plan.n;
        (nodes, short)
    })
}

/// Dispatches on `plan.protocol`.
pub fn sample(g: &Graph, pool: &[usize], plan: &SamplePlan) -> Result<Vec<TestSample>> {
    match plan.protocol {
        Protocol::Pps => sample_pps(g, pool, plan),
        Protocol::Rw => sample_rw(g, pool, plan),
        Protocol::Bfs => sample_bfs(g, pool, plan),
    }
}
