//! Mini-batch SGD on the reference classifier with a pluggable batch sampler.
//!
//! With the submodular sampler, every iteration selects its batch from the
//! current model's softmax outputs and hidden embeddings; both are
//! recomputed only when the score cache is due for a refresh.

mod model;
mod sampler;

use std::time::{Duration, Instant};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use model::{BatchForward, Gradients, Layer, ModelParams};
pub use sampler::{loss_based_sample, EpochShuffler};

use crate::config::{sample_size, validate_config, ObjectiveWeights, SamplerKind, SelectionConfig, TrainerConfig};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::maximize::get_mini_batch;
use crate::objective::Objective;
use crate::rng::Rng;
use crate::scoring::ScoreRefresher;
use model::gather_rows;

/// Metrics recorded after each epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
    pub batches_selected: usize,
    /// Seconds spent choosing batches this epoch.
    pub selection_time: f64,
    /// Seconds spent on gradient steps this epoch.
    pub step_time: f64,
}

impl EpochReport {
    /// Equality ignoring the wall-clock fields.
    pub fn same_metrics(&self, other: &Self) -> bool {
        self.epoch == other.epoch
            && self.train_loss.to_bits() == other.train_loss.to_bits()
            && self.train_accuracy.to_bits() == other.train_accuracy.to_bits()
            && self.test_loss.to_bits() == other.test_loss.to_bits()
            && self.test_accuracy.to_bits() == other.test_accuracy.to_bits()
            && self.batches_selected == other.batches_selected
    }
}

/// Mean-over-epochs and final test metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub mean_accuracy: f64,
    pub final_accuracy: f64,
    pub mean_loss: f64,
    pub final_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub reports: Vec<EpochReport>,
    pub model: ModelParams,
    pub iterations: usize,
    /// Number of score-cache rebuilds (submodular sampler only).
    pub score_recomputations: usize,
}

impl TrainOutcome {
    pub fn summary(&self) -> TrainSummary {
        let n = self.reports.len().max(1) as f64;
        let last = self.reports.last();
        TrainSummary {
            mean_accuracy: self.reports.iter().map(|r| r.test_accuracy).sum::<f64>() / n,
            final_accuracy: last.map_or(0.0, |r| r.test_accuracy),
            mean_loss: self.reports.iter().map(|r| r.test_loss).sum::<f64>() / n,
            final_loss: last.map_or(0.0, |r| r.test_loss),
        }
    }
}

/// Result of one gradient step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    /// Mean batch loss before the update.
    pub loss: f64,
    pub per_sample_losses: Vec<f64>,
}

/// One momentum-SGD step on the mean cross-entropy of `batch`.
pub fn sgd_step(
    model: &mut ModelParams,
    batch: &[usize],
    dataset: &Dataset,
    cfg: &TrainerConfig,
) -> Result<StepOutcome> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let x = gather_rows(dataset.features(), batch);
    let labels: Vec<usize> = batch.iter().map(|&i| dataset.labels()[i]).collect();
    let (loss, grads, per_sample_losses) = model.loss_and_gradient(x.view(), &labels);
    if !loss.is_finite() || !grads.is_finite() {
        return Err(Error::NonFinite(format!(
            "gradient step on batch of {} (loss {loss}, lr {})",
            batch.len(),
            cfg.learning_rate
        )));
    }
    model.apply_gradients(&grads, cfg.learning_rate, cfg.momentum, cfg.weight_decay);
    Ok(StepOutcome {
        loss,
        per_sample_losses,
    })
}

/// Mean loss and accuracy of `model` over all of `dataset`.
pub fn evaluate(model: &ModelParams, dataset: &Dataset) -> (f64, f64) {
    let out = model.forward_batch(dataset.features().view(), Some(dataset.labels()));
    let n = dataset.len().max(1) as f64;
    let loss = out.losses.iter().sum::<f64>() / n;
    let correct = out
        .probs
        .rows()
        .into_iter()
        .zip(dataset.labels())
        .filter(|(p, &y)| {
            let argmax = p
                .iter()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) },
                )
                .0;
            argmax == y
        })
        .count();
    (loss, correct as f64 / n)
}

/// Fixed features for the feature-match score: train a fresh model for one
/// epoch on a random half of `dataset` and return its rectified hidden
/// activations for every point (`|x|` when there is no hidden layer).
pub fn snapshot_fixed_features(
    dataset: &Dataset,
    cfg: &TrainerConfig,
    selection: &SelectionConfig,
) -> Result<Array2<f64>> {
    let rng = Rng::new(selection.seed).fork_named("snapshot");
    let mut model = ModelParams::init(
        dataset.dim(),
        cfg.hidden,
        dataset.n_classes(),
        &mut rng.fork_named("init"),
    );
    if cfg.hidden == 0 {
        return Ok(model.rectified_features(dataset.features().view()));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    rng.fork_named("subset").shuffle(&mut order);
    order.truncate((dataset.len() / 2).max(1));
    for batch in order.chunks(selection.batch_size.max(1)) {
        sgd_step(&mut model, batch, dataset, cfg)?;
    }
    Ok(model.rectified_features(dataset.features().view()))
}

/// Run `cfg.epochs` epochs of `⌊n / b⌋` iterations each.
pub fn train(
    train_set: &Dataset,
    test_set: &Dataset,
    cfg: &TrainerConfig,
    selection: &SelectionConfig,
    weights: &ObjectiveWeights,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.dim() != test_set.dim() || train_set.n_classes() != test_set.n_classes() {
        return Err(Error::DimensionMismatch(format!(
            "train is {}-d with {} classes, test is {}-d with {} classes",
            train_set.dim(),
            train_set.n_classes(),
            test_set.dim(),
            test_set.n_classes()
        )));
    }
    let n = train_set.len();
    let b = selection.batch_size;
    if b == 0 || b > n {
        return Err(Error::Config(format!("batch_size {b} must lie in 1..={n}")));
    }

    let root = Rng::new(selection.seed);
    let mut model = ModelParams::init(
        train_set.dim(),
        cfg.hidden,
        train_set.n_classes(),
        &mut root.fork_named("init"),
    );

    // submodular sampler setup
    let mut weights = weights.clone();
    let mut ground_data = train_set.clone();
    if cfg.sampler == SamplerKind::Smdl {
        if weights.lambda4 > 0.0 && ground_data.fixed_features().is_none() {
            let fixed = snapshot_fixed_features(train_set, cfg, selection)?;
            ground_data = ground_data.with_fixed_features(Some(fixed))?;
        }
        weights = ground_data.effective_weights(&weights);
        validate_config(&weights, selection, n)?;
    }
    let mut refresher = ScoreRefresher::new(selection);
    let mut view: Option<Dataset> = None;

    let mut shuffler = EpochShuffler::new(n);
    let mut latest_losses = match cfg.sampler {
        SamplerKind::LossBased => {
            model
                .forward_batch(train_set.features().view(), Some(train_set.labels()))
                .losses
        }
        _ => Vec::new(),
    };
    let sample_rng = root.fork_named("sampler");

    let per_epoch = n / b;
    let mut iteration: u64 = 0;
    let mut reports = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut selection_time = Duration::ZERO;
        let mut step_time = Duration::ZERO;
        shuffler.start_epoch(&mut sample_rng.fork_named("epoch").fork(epoch as u64));
        let mut used = vec![false; n];
        for _ in 0..per_epoch {
            let started = Instant::now();
            let batch = match cfg.sampler {
                SamplerKind::Uniform => shuffler.next_batch(b),
                SamplerKind::LossBased => loss_based_sample(
                    &latest_losses,
                    b,
                    &mut sample_rng.fork(iteration),
                    cfg.loss_based_exponent,
                ),
                SamplerKind::Smdl => {
                    if refresher.needs_recompute() || view.is_none() {
                        let out = model.forward_batch(ground_data.features().view(), None);
                        view = Some(ground_data.with_model_outputs(out.embeddings, out.probs)?);
                    }
                    let current = view.as_ref().expect("model outputs computed");
                    let cache = refresher.refresh(current, iteration, &weights)?;
                    let objective = Objective::new(current, cache, &weights)?;
                    let ground: Vec<usize> = if cfg.epoch_without_replacement {
                        (0..n).filter(|&i| !used[i]).collect()
                    } else {
                        (0..n).collect()
                    };
                    let m = selection.partitions.min(ground.len());
                    let s = sample_size(ground.len(), b, selection.epsilon, ground.len().div_ceil(m));
                    let picked = get_mini_batch(&objective, &ground, b, m, s, &sample_rng.fork(iteration))?;
                    picked.indices
                }
            };
            selection_time += started.elapsed();

            let started = Instant::now();
            let step = sgd_step(&mut model, &batch, train_set, cfg)?;
            step_time += started.elapsed();
            if cfg.sampler == SamplerKind::LossBased {
                for (&i, &l) in batch.iter().zip(&step.per_sample_losses) {
                    latest_losses[i] = l;
                }
            }
            for &i in &batch {
                used[i] = true;
            }
            iteration += 1;
        }
        let (train_loss, train_accuracy) = evaluate(&model, train_set);
        let (test_loss, test_accuracy) = evaluate(&model, test_set);
        log::debug!("epoch {epoch}: test acc {test_accuracy:.4} loss {test_loss:.4}");
        reports.push(EpochReport {
            epoch,
            train_loss,
            train_accuracy,
            test_loss,
            test_accuracy,
            batches_selected: per_epoch,
            selection_time: selection_time.as_secs_f64(),
            step_time: step_time.as_secs_f64(),
        });
    }
    Ok(TrainOutcome {
        reports,
        model,
        iterations: iteration as usize,
        score_recomputations: refresher.recomputations(),
    })
}
