//! Submodular mini-batch selection.
//!
//! Batches are chosen by greedily maximizing a weighted sum of four scores:
//! model uncertainty (entropy), redundancy (distance to the points already
//! picked), closeness to the dataset mean, and a concave feature-match term.
//! Selection runs a stochastic greedy on random partitions of the ground set
//! and again on the merged picks. A small reference classifier and SGD loop
//! ([`trainer`]) drive the selector end to end.

pub mod config;
pub mod dataset;
pub mod error;
pub mod maximize;
pub mod metrics;
pub mod objective;
pub mod rng;
pub mod scoring;
pub mod synth;
pub mod trainer;

pub use config::{
    sample_size, validate_config, CheckedConfig, FmMode, MetricChoice, ObjectiveWeights, RunConfig, SamplerKind,
    SelectionConfig, TrainerConfig,
};
pub use dataset::{load_dataset, partition, Dataset, DatasetPaths, MatrixFormat};
pub use error::{Error, Result};
pub use maximize::{
    brute_force, get_mini_batch, greedy, lazy_greedy, ltlg, BruteForceMode, MaximizerKind, SelectionResult,
};
pub use metrics::{distance, MetricKind};
pub use objective::{Objective, SelectionState, TraceStep};
pub use rng::Rng;
pub use scoring::{ScoreCache, ScoreRefresher};
pub use trainer::{train, EpochReport, ModelParams, TrainOutcome};

/// Score `dataset` from scratch and run one partitioned selection with the
/// given settings. This is the single-shot entry point used by the CLI
/// `select` command and by external callers.
pub fn select_batch(
    dataset: &Dataset,
    weights: &ObjectiveWeights,
    selection: &SelectionConfig,
) -> Result<(SelectionResult, ScoreCache)> {
    let weights = dataset.effective_weights(weights);
    let checked = validate_config(&weights, selection, dataset.len())?;
    let root = Rng::new(selection.seed);
    let cache = ScoreCache::compute(dataset, &weights, 0, &root.fork_named("scores"))?;
    let objective = Objective::new(dataset, &cache, &weights)?;
    let ground: Vec<usize> = (0..dataset.len()).collect();
    let result = get_mini_batch(
        &objective,
        &ground,
        selection.batch_size,
        selection.partitions,
        checked.sample_size,
        &root.fork_named("select"),
    )?;
    Ok((result, cache))
}
