//! Prevalence estimation ("quantification") over sets of graph nodes.
//!
//! The crate provides classify-and-count, adjusted-count and
//! distribution-matching quantifiers (HDy, multi-class histogram matching,
//! KDEy-ML), structural importance sampling (SIS) to correct them under
//! structural covariate shift, and the shift samplers, metrics and benchmark
//! loop used to evaluate them.
//!
//! Typical flow:
//!
//! 1. build or load a [`Graph`] and partition it with [`make_split`];
//! 2. obtain per-node posteriors from [`classifier::LogisticModel`] or
//!    [`classifier::load_posteriors`];
//! 3. draw test samples with [`samplers`];
//! 4. fit a quantifier on the quantifier-train posteriors (optionally with
//!    [`sis`] weights computed against the test sample) and quantify.

pub mod bench;
pub mod classifier;
mod error;
pub mod graph;
pub mod kernels;
pub mod metrics;
mod prevalence;
pub mod quantifiers;
pub mod report;
pub mod samplers;
pub mod simplex;
pub mod sis;
pub mod split;
pub mod synthetic;

pub use error::{Error, Result};
pub use graph::Graph;
pub use prevalence::Prevalence;
pub use split::{make_split, Split};

pub(crate) mod rng {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Independent, reproducible stream `stream` under master seed `seed`.
    pub fn derived(seed: u64, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        rng
    }

    /// Mixes several integers into one seed (splitmix64 finalizer chain).
    pub fn mix(parts: &[u64]) -> u64 {
        let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
        for &p in parts {
            h ^= p
                .wrapping_add(0x9E37_79B9_7F4A_7C15)
                .wrapping_add(h << 6)
                .wrapping_add(h >> 2);
            h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            h ^= h >> 31;
        }
        h
    }
}
