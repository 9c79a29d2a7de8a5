//! Distance metrics for redundancy, plus scale estimation and min-max normalization.

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::Array2;

use crate::config::{MetricChoice, ObjectiveWeights};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Default number of random pairs used by [`resolve_sigma`] and [`estimate_scale`].
pub const DEFAULT_PAIRS: usize = 1024;

/// Lower bound returned by [`estimate_scale`].
pub const SCALE_FLOOR: f64 = 1e-12;

static DEGENERATE: AtomicU64 = AtomicU64::new(0);

/// Number of cosine/correlation evaluations that hit a zero-norm or constant
/// vector and fell back to 1.0 (process-wide).
pub fn degenerate_count() -> u64 {
    DEGENERATE.load(Ordering::Relaxed)
}

/// A resolved distance metric. Larger always means farther apart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricKind {
    Euclidean,
    Cosine,
    Correlation,
    /// `1 − exp(−‖u−v‖² / 2σ²)`.
    Gaussian {
        sigma: f64,
    },
}

impl MetricKind {
    /// Resolve the configured metric, running the median heuristic for an unset sigma.
    pub fn resolve(weights: &ObjectiveWeights, features: &Array2<f64>, rng: &mut Rng) -> Result<Self> {
        Ok(match weights.metric {
            MetricChoice::Euclidean => Self::Euclidean,
            MetricChoice::Cosine => Self::Cosine,
            MetricChoice::Correlation => Self::Correlation,
            MetricChoice::Gaussian => {
                let sigma = match weights.gaussian_sigma {
                    Some(s) => s,
                    None => resolve_sigma(features, rng, DEFAULT_PAIRS)?,
                };
                Self::Gaussian { sigma }
            }
        })
    }

    #[inline]
    pub fn distance(&self, u: &[f64], v: &[f64]) -> f64 {
        distance(*self, u, v)
    }
}

#[inline]
fn sq_euclidean(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn cosine_distance(u: &[f64], v: &[f64]) -> f64 {
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        DEGENERATE.fetch_add(1, Ordering::Relaxed);
        return 1.0;
    }
    (1.0 - dot / (nu.sqrt() * nv.sqrt())).clamp(0.0, 2.0)
}

fn correlation_distance(u: &[f64], v: &[f64]) -> f64 {
    let n = u.len() as f64;
    let mu = u.iter().sum::<f64>() / n;
    let mv = v.iter().sum::<f64>() / n;
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        let (a, b) = (a - mu, b - mv);
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        DEGENERATE.fetch_add(1, Ordering::Relaxed);
        return 1.0;
    }
    (1.0 - dot / (nu.sqrt() * nv.sqrt())).clamp(0.0, 2.0)
}

/// Distance between two equal-length vectors. Identical inputs are at
/// distance 0 under every metric; zero-norm (cosine) or constant
/// (correlation) inputs otherwise give 1.0.
pub fn distance(metric: MetricKind, u: &[f64], v: &[f64]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    if u == v {
        return 0.0;
    }
    match metric {
        MetricKind::Euclidean => sq_euclidean(u, v).sqrt(),
        MetricKind::Cosine => cosine_distance(u, v),
        MetricKind::Correlation => correlation_distance(u, v),
        MetricKind::Gaussian { sigma } => {
            let d2 = sq_euclidean(u, v);
            -(-d2 / (2.0 * sigma * sigma)).exp_m1()
        }
    }
}

/// Index pairs used for scale statistics: every pair when the budget covers
/// them all, otherwise `pairs` random pairs of distinct points.
fn sample_pairs(n: usize, rng: &mut Rng, pairs: usize) -> Vec<(usize, usize)> {
    let total = n * (n - 1) / 2;
    if pairs >= total {
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
    } else {
        (0..pairs)
            .map(|_| {
                let i = rng.below(n);
                let mut j = rng.below(n - 1);
                if j >= i {
                    j += 1;
                }
                (i, j)
            })
            .collect()
    }
}

fn row(features: &Array2<f64>, i: usize) -> &[f64] {
    features.row(i).to_slice().expect("row-major features")
}

/// Median-heuristic bandwidth: median euclidean distance over sampled pairs,
/// 1.0 when that median is zero.
pub fn resolve_sigma(features: &Array2<f64>, rng: &mut Rng, pairs: usize) -> Result<f64> {
    let n = features.nrows();
    if n < 2 {
        return Err(Error::Config(format!("sigma needs at least 2 points, got {n}")));
    }
    let mut d: Vec<f64> = sample_pairs(n, rng, pairs)
        .into_iter()
        .map(|(i, j)| sq_euclidean(row(features, i), row(features, j)).sqrt())
        .collect();
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    let median = if d.len() % 2 == 1 {
        d[mid]
    } else {
        0.5 * (d[mid - 1] + d[mid])
    };
    Ok(if median > 0.0 { median } else { 1.0 })
}

/// Maximum metric distance over sampled pairs, floored at [`SCALE_FLOOR`].
pub fn estimate_scale(features: &Array2<f64>, metric: MetricKind, rng: &mut Rng, pairs: usize) -> f64 {
    let n = features.nrows();
    if n < 2 {
        return SCALE_FLOOR;
    }
    sample_pairs(n, rng, pairs)
        .into_iter()
        .map(|(i, j)| metric.distance(row(features, i), row(features, j)))
        .fold(SCALE_FLOOR, f64::max)
}

/// Map scores affinely onto `[0, 1]`; a constant vector maps to all zeros.
pub fn minmax_normalize(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::Config("cannot normalize an empty score vector".into()));
    }
    let (lo, hi) = scores.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
        (lo.min(x), hi.max(x))
    });
    let span = hi - lo;
    // Constant (or non-finite) input carries no ranking information.
    if span.is_nan() || span <= 0.0 {
        return Ok(vec![0.0; scores.len()]);
    }
    Ok(scores.iter().map(|x| ((x - lo) / span).clamp(0.0, 1.0)).collect())
}
