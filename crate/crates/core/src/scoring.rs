//! Per-point scores (uncertainty, mean closeness, feature match) and the
//! cache that reuses them for `refresh_rate` consecutive selections.

use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Axis};

use crate::config::{ObjectiveWeights, SelectionConfig};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{estimate_scale, minmax_normalize, MetricKind, DEFAULT_PAIRS, SCALE_FLOOR};
use crate::rng::Rng;

/// Shannon entropy (natural log) of a probability row, with `0·ln 0 = 0`.
pub fn uncertainty(probs: &[f64]) -> f64 {
    -probs.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
}

/// Cosine similarity to the mean, mapped from `[-1, 1]` onto `[0, 1]`.
/// Zero-norm inputs score a neutral 0.5.
pub fn mean_closeness(x: &[f64], mean: &[f64]) -> f64 {
    let (mut dot, mut nx, mut nm) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(mean) {
        dot += a * b;
        nx += a * a;
        nm += b * b;
    }
    if nx == 0.0 || nm == 0.0 {
        return 0.5;
    }
    let cos = (dot / (nx.sqrt() * nm.sqrt())).clamp(-1.0, 1.0);
    0.5 * (1.0 + cos)
}

/// `Σ_u sqrt(m_u(x))`.
pub fn feature_match_modular(fixed_row: &[f64]) -> f64 {
    fixed_row.iter().map(|m| m.max(0.0).sqrt()).sum()
}

/// Gain of adding a row to per-dimension running sums: `Σ_u sqrt(acc_u + m_u) − sqrt(acc_u)`.
pub fn feature_match_set_gain(acc: &[f64], fixed_row: &[f64]) -> f64 {
    acc.iter()
        .zip(fixed_row)
        .map(|(a, m)| (a + m.max(0.0)).sqrt() - a.sqrt())
        .sum()
}

/// Model-dependent per-point scores, normalized over the whole dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreCache {
    pub u_scores: Vec<f64>,
    pub mc_scores: Vec<f64>,
    pub fm_scores: Vec<f64>,
    /// Largest raw modular feature-match value; divides set-mode gains so the
    /// first pick lands in `[0, 1]` like the modular score.
    pub fm_scale: f64,
    pub mean: Array1<f64>,
    pub redundancy_scale: f64,
    pub metric: MetricKind,
    pub model_stamp: u64,
    pub age: usize,
}

impl ScoreCache {
    /// Compute every score from the dataset's current probabilities and features.
    pub fn compute(dataset: &Dataset, weights: &ObjectiveWeights, model_stamp: u64, rng: &Rng) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::Config("cannot score an empty dataset".into()));
        }
        let mut rng = rng.fork(model_stamp);
        let features = dataset.features();
        let mean = features.mean_axis(Axis(0)).expect("non-empty");
        let mean_slice = mean.as_slice().expect("contiguous");

        let raw_u: Vec<f64> = dataset
            .probs()
            .rows()
            .into_iter()
            .map(|p| uncertainty(p.as_slice().expect("row-major probs")))
            .collect();
        let raw_mc: Vec<f64> = features
            .rows()
            .into_iter()
            .map(|x| mean_closeness(x.as_slice().expect("row-major features"), mean_slice))
            .collect();
        let raw_fm: Vec<f64> = match dataset.fixed_features() {
            Some(ff) => ff
                .rows()
                .into_iter()
                .map(|r| feature_match_modular(r.as_slice().expect("row-major fixed features")))
                .collect(),
            None => vec![0.0; dataset.len()],
        };
        let fm_scale = raw_fm.iter().copied().fold(SCALE_FLOOR, f64::max);

        let metric = MetricKind::resolve(weights, features, &mut rng)?;
        let redundancy_scale = estimate_scale(features, metric, &mut rng, DEFAULT_PAIRS);

        Ok(Self {
            u_scores: minmax_normalize(&raw_u)?,
            mc_scores: minmax_normalize(&raw_mc)?,
            fm_scores: minmax_normalize(&raw_fm)?,
            fm_scale,
            mean,
            redundancy_scale,
            metric,
            model_stamp,
            age: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.u_scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u_scores.is_empty()
    }

    /// Debug dump: `index,u,mc,fm`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |e| Error::io(path, e);
        let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        writeln!(w, "index,u,mc,fm").map_err(io)?;
        for i in 0..self.len() {
            writeln!(
                w,
                "{i},{},{},{}",
                self.u_scores[i], self.mc_scores[i], self.fm_scores[i]
            )
            .map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

/// Holds the current [`ScoreCache`] and decides when it is stale.
#[derive(Debug, Clone)]
pub struct ScoreRefresher {
    refresh_rate: usize,
    cache: Option<ScoreCache>,
    recomputations: usize,
    rng: Rng,
}

impl ScoreRefresher {
    pub fn new(selection: &SelectionConfig) -> Self {
        Self {
            refresh_rate: selection.refresh_rate.max(1),
            cache: None,
            recomputations: 0,
            rng: Rng::new(selection.seed).fork_named("scores"),
        }
    }

    /// Whether the next [`refresh`](Self::refresh) call will recompute. Callers
    /// use this to skip producing fresh model outputs for a reused cache.
    pub fn needs_recompute(&self) -> bool {
        match &self.cache {
            None => true,
            Some(c) => c.age + 1 >= self.refresh_rate,
        }
    }

    /// Advance one selection iteration: reuse the cache (age + 1) while it is
    /// younger than the refresh rate, otherwise rebuild it from `dataset`.
    pub fn refresh(&mut self, dataset: &Dataset, iteration: u64, weights: &ObjectiveWeights) -> Result<&ScoreCache> {
        if self.needs_recompute() {
            self.cache = Some(ScoreCache::compute(dataset, weights, iteration, &self.rng)?);
            self.recomputations += 1;
        } else if let Some(c) = self.cache.as_mut() {
            c.age += 1;
        }
        Ok(self.cache.as_ref().expect("cache populated"))
    }

    pub fn cache(&self) -> Option<&ScoreCache> {
        self.cache.as_ref()
    }

    pub fn recomputations(&self) -> usize {
        self.recomputations
    }

    pub fn refresh_rate(&self) -> usize {
        self.refresh_rate
    }
}
