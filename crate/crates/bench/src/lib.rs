//! Shared fixtures for the selection benchmarks.

use smdl_core::{synth::random_instance_with, Dataset, ObjectiveWeights, Rng, ScoreCache};

/// Clustered instance with `n` points in `d` dimensions and its score cache.
pub fn scored_instance(seed: u64, n: usize, d: usize) -> (Dataset, ObjectiveWeights, ScoreCache) {
    let dataset = random_instance_with(seed, n, d, 10, 16);
    let weights = ObjectiveWeights::default();
    let cache = ScoreCache::compute(&dataset, &weights, 0, &Rng::new(seed)).expect("valid instance");
    (dataset, weights, cache)
}
