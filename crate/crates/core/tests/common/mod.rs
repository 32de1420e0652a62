#![allow(dead_code)]

use graphquant::classifier::PosteriorMatrix;
use graphquant::graph::Features;
use graphquant::simplex::project;
use graphquant::Graph;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Posterior-like vectors: Gaussian around a class-specific point of the
/// simplex, projected back onto it.
pub struct SimplexGaussians {
    pub means: Vec<Vec<f64>>,
    pub std: f64,
}

impl SimplexGaussians {
    /// Class `c` is centred at `peak` on coordinate `c`, the rest spread evenly.
    pub fn peaked(k: usize, peak: f64, std: f64) -> Self {
        let rest = (1.0 - peak) / (k - 1) as f64;
        let means = (0..k)
            .map(|c| (0..k).map(|i| if i == c { peak } else { rest }).collect())
            .collect();
        SimplexGaussians { means, std }
    }

    pub fn draw(&self, class: usize, rng: &mut impl Rng) -> Vec<f64> {
        let noise = Normal::new(0.0, self.std).unwrap();
        let v: Vec<f64> = self.means[class].iter().map(|m| m + noise.sample(rng)).collect();
        project(&v)
    }

    /// `counts[c]` draws of class `c`, shuffled; returns posteriors and labels.
    pub fn sample(&self, counts: &[usize], rng: &mut impl Rng) -> (PosteriorMatrix, Vec<usize>) {
        let mut labels: Vec<usize> = counts
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| std::iter::repeat_n(c, n))
            .collect();
        labels.shuffle(rng);
        let rows = labels.iter().map(|&c| self.draw(c, rng)).collect();
        (PosteriorMatrix::new(rows, counts.len()).unwrap(), labels)
    }
}

/// Erdős–Rényi graph with random features and labels covering `0..k`.
pub fn random_graph(n: usize, p: f64, k: usize, dim: usize, rng: &mut impl Rng) -> Graph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let mut labels: Vec<usize> = (0..n).map(|u| if u < k { u } else { rng.random_range(0..k) }).collect();
    labels.shuffle(rng);
    let rows = (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    Graph::new(n, &edges, Some(Features::from_rows(rows).unwrap()), Some(labels)).unwrap()
}

/// Random rows on the simplex.
pub fn random_posteriors(n: usize, k: usize, rng: &mut impl Rng) -> PosteriorMatrix {
    let rows = (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
        .collect();
    PosteriorMatrix::new(rows, k).unwrap()
}
