//! Synthetic data: Gaussian-blob classification sets and small random
//! selection instances for oracle checks and benchmarks.

use ndarray::{Array2, Axis};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Parameters of a blob classification problem. Class `c` is centred at
/// `separation · e_c`; all classes share isotropic noise `noise`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlobSpec {
    pub classes: usize,
    pub dim: usize,
    pub train: usize,
    pub test: usize,
    pub noise: f64,
    pub separation: f64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        Self {
            classes: 4,
            dim: 16,
            train: 2000,
            test: 1000,
            noise: 0.45,
            separation: 1.0,
        }
    }
}

impl BlobSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Config("blobs need at least 2 classes".into()));
        }
        if self.dim < self.classes {
            return Err(Error::Config(format!(
                "dim {} too small to place {} simplex means",
                self.dim, self.classes
            )));
        }
        if self.train < self.classes || self.test == 0 {
            return Err(Error::Config(
                "train must cover every class and test must be non-empty".into(),
            ));
        }
        if !(self.noise.is_finite() && self.noise > 0.0 && self.separation.is_finite() && self.separation > 0.0) {
            return Err(Error::Config("noise and separation must be positive".into()));
        }
        Ok(())
    }
}

fn blob_split(spec: &BlobSpec, n: usize, rng: &mut Rng) -> Result<Dataset> {
    let mut labels: Vec<usize> = (0..n).map(|i| i % spec.classes).collect();
    rng.shuffle(&mut labels);
    let noise = Normal::new(0.0, spec.noise).expect("positive noise");
    let mut features = Array2::zeros((n, spec.dim));
    for (i, mut row) in features.rows_mut().into_iter().enumerate() {
        for v in row.iter_mut() {
            *v = noise.sample(rng.raw());
        }
        row[labels[i]] += spec.separation;
    }
    let probs = Array2::from_elem((n, spec.classes), 1.0 / spec.classes as f64);
    Dataset::new(features, probs, labels, None)
}

/// Generate `(train, test)` blob datasets with uniform placeholder probabilities.
pub fn gen_blobs(spec: &BlobSpec, seed: u64) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    let root = Rng::new(seed);
    let train = blob_split(spec, spec.train, &mut root.fork_named("train"))?;
    let test = blob_split(spec, spec.test, &mut root.fork_named("test"))?;
    Ok((train, test))
}

/// Small clustered instance with random softmax rows and non-negative fixed
/// features (4 dims), used by oracle checks and property tests.
pub fn random_instance(seed: u64, n: usize, d: usize) -> Dataset {
    random_instance_with(seed, n, d, 3, 4)
}

pub fn random_instance_with(seed: u64, n: usize, d: usize, classes: usize, fixed_dims: usize) -> Dataset {
    let mut rng = Rng::new(seed);
    let clusters = 3.min(n.max(1));
    let centers = Array2::from_shape_fn((clusters, d), |_| rng.unit() * 4.0 - 2.0);
    let gauss = Normal::new(0.0, 0.5).unwrap();
    let mut features = Array2::zeros((n, d));
    for (i, mut row) in features.rows_mut().into_iter().enumerate() {
        let c = i % clusters;
        for (k, v) in row.iter_mut().enumerate() {
            *v = centers[[c, k]] + gauss.sample(rng.raw());
        }
    }
    let logits = Array2::from_shape_fn((n, classes), |_| 2.0 * gauss.sample(rng.raw()));
    let exp = logits.mapv(f64::exp);
    let probs = &exp / &exp.sum_axis(Axis(1)).insert_axis(Axis(1));
    let fixed = Array2::from_shape_fn((n, fixed_dims), |_| {
        let v: f64 = rng.unit();
        // sparse-ish rectified activations
        if v < 0.3 {
            0.0
        } else {
            v * 3.0
        }
    });
    let labels = (0..n).map(|i| i % classes).collect();
    Dataset::new(features, probs, labels, Some(fixed)).expect("generated instance is valid")
}
