//! Objective, selection and trainer configuration, plus validation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distance used for redundancy (and scale estimation).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MetricChoice {
    #[default]
    Euclidean,
    Cosine,
    Correlation,
    Gaussian,
}

impl std::str::FromStr for MetricChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" => Ok(Self::Euclidean),
            "cosine" => Ok(Self::Cosine),
            "correlation" => Ok(Self::Correlation),
            "gaussian" => Ok(Self::Gaussian),
            other => Err(Error::Config(format!("unknown metric '{other}'"))),
        }
    }
}

impl std::fmt::Display for MetricChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::Euclidean => "euclidean",
            Self::Cosine => "cosine",
            Self::Correlation => "correlation",
            Self::Gaussian => "gaussian",
        };
        f.write_str(s)
    }
}

/// How the feature-match term enters the objective.
///
/// `Modular` scores each point on its own (`Σ_u sqrt(m_u(x))`); `Set` applies the
/// square root to per-dimension sums over the selection, which makes the term
/// monotone submodular.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FmMode {
    #[default]
    Modular,
    Set,
}

impl std::str::FromStr for FmMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "modular" => Ok(Self::Modular),
            "set" => Ok(Self::Set),
            other => Err(Error::Config(format!("unknown fm_mode '{other}'"))),
        }
    }
}

/// Trade-off coefficients and switches of the four-term objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectiveWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
    pub metric: MetricChoice,
    /// `None` resolves sigma with the median heuristic.
    pub gaussian_sigma: Option<f64>,
    pub fm_mode: FmMode,
    /// Redundancy credited to the first pick, when the selection is still empty.
    pub r_max: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        Self {
            lambda1: 0.2,
            lambda2: 0.1,
            lambda3: 0.5,
            lambda4: 0.2,
            metric: MetricChoice::Euclidean,
            gaussian_sigma: None,
            fm_mode: FmMode::Modular,
            r_max: 1.0,
        }
    }
}

impl ObjectiveWeights {
    pub fn with_lambdas(l1: f64, l2: f64, l3: f64, l4: f64) -> Self {
        Self {
            lambda1: l1,
            lambda2: l2,
            lambda3: l3,
            lambda4: l4,
            ..Self::default()
        }
    }

    pub fn lambdas(&self) -> [f64; 4] {
        [self.lambda1, self.lambda2, self.lambda3, self.lambda4]
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.lambdas();
        if l.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config(format!("lambdas must be finite and >= 0, got {l:?}")));
        }
        if l.iter().all(|v| *v == 0.0) {
            return Err(Error::Config("at least one lambda must be positive".into()));
        }
        if !(self.r_max.is_finite() && self.r_max > 0.0) {
            return Err(Error::Config(format!("r_max must be positive, got {}", self.r_max)));
        }
        if let Some(sigma) = self.gaussian_sigma {
            if !(sigma.is_finite() && sigma > 0.0) {
                return Err(Error::Config(format!("gaussian_sigma must be positive, got {sigma}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub batch_size: usize,
    pub partitions: usize,
    pub epsilon: f64,
    pub refresh_rate: usize,
    pub seed: u64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            batch_size: 50,
            partitions: 10,
            epsilon: 0.1,
            refresh_rate: 5,
            seed: 0,
        }
    }
}

impl SelectionConfig {
    /// Size of the largest part when `n` points are split into `partitions` parts.
    pub fn max_partition_size(&self, n: usize) -> usize {
        n.div_ceil(self.partitions.max(1))
    }
}

/// Stochastic-greedy sample size `ceil((n / b) · ln(1/ε))`, clamped to `[1, cap]`.
pub fn sample_size(n: usize, batch_size: usize, epsilon: f64, cap: usize) -> usize {
    let raw = (n as f64 / batch_size as f64) * (1.0 / epsilon).ln();
    let s = raw.ceil();
    let s = if s.is_finite() && s >= 1.0 { s as usize } else { 1 };
    s.clamp(1, cap.max(1))
}

/// Output of [`validate_config`]: inputs known to be consistent plus derived quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckedConfig {
    pub weights: ObjectiveWeights,
    pub selection: SelectionConfig,
    pub n: usize,
    pub sample_size: usize,
}

/// Check weights and selection settings against a ground set of `n` points.
pub fn validate_config(weights: &ObjectiveWeights, selection: &SelectionConfig, n: usize) -> Result<CheckedConfig> {
    weights.validate()?;
    if selection.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    if selection.batch_size > n {
        return Err(Error::Config(format!(
            "batch_size {} exceeds dataset size {n}",
            selection.batch_size
        )));
    }
    if selection.partitions == 0 {
        return Err(Error::Config("partitions must be >= 1".into()));
    }
    if selection.partitions > n {
        return Err(Error::Config(format!(
            "partitions {} exceeds dataset size {n}",
            selection.partitions
        )));
    }
    if !(selection.epsilon > 0.0 && selection.epsilon < 1.0) {
        return Err(Error::Config(format!(
            "epsilon must lie in (0, 1), got {}",
            selection.epsilon
        )));
    }
    if selection.refresh_rate == 0 {
        return Err(Error::Config("refresh_rate must be >= 1".into()));
    }
    let s = sample_size(
        n,
        selection.batch_size,
        selection.epsilon,
        selection.max_partition_size(n),
    );
    Ok(CheckedConfig {
        weights: weights.clone(),
        selection: selection.clone(),
        n,
        sample_size: s,
    })
}

/// Mini-batch sampler used by the trainer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    #[default]
    Uniform,
    LossBased,
    Smdl,
}

impl std::str::FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "uniform" | "sgd" => Ok(Self::Uniform),
            "loss_based" | "loss" => Ok(Self::LossBased),
            "smdl" | "submodular" => Ok(Self::Smdl),
            other => Err(Error::Config(format!("unknown sampler '{other}'"))),
        }
    }
}

impl std::fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Uniform => "uniform",
            Self::LossBased => "loss_based",
            Self::Smdl => "smdl",
        })
    }
}

/// Reference-model training settings. Batch size, refresh rate and seed are
/// shared with [`SelectionConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub sampler: SamplerKind,
    pub loss_based_exponent: f64,
    /// Hidden-layer width; 0 means plain softmax regression.
    pub hidden: usize,
    /// Exclude points already used in the current epoch from the ground set.
    pub epoch_without_replacement: bool,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            learning_rate: 0.1,
            momentum: 0.9,
            weight_decay: 1e-4,
            sampler: SamplerKind::Uniform,
            loss_based_exponent: 100.0,
            hidden: 32,
            epoch_without_replacement: false,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.momentum.is_finite() && (0.0..1.0).contains(&self.momentum)) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Config("weight_decay must be >= 0".into()));
        }
        if !(self.loss_based_exponent.is_finite() && self.loss_based_exponent >= 1.0) {
            return Err(Error::Config("loss_based_exponent must be >= 1".into()));
        }
        Ok(())
    }
}

/// One JSON document holding every setting, keyed by field name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RunConfig {
    #[serde(flatten)]
    pub weights: ObjectiveWeights,
    #[serde(flatten)]
    pub selection: SelectionConfig,
    #[serde(flatten)]
    pub trainer: TrainerConfig,
}

impl RunConfig {
    /// Parse a flat JSON object; missing keys take defaults, unknown keys are rejected.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config json: {e}")))?;
        let serde_json::Value::Object(map) = value else {
            return Err(Error::Config("config json must be an object".into()));
        };
        let known = Self::keys();
        if let Some(bad) = map.keys().find(|k| !known.contains(k)) {
            return Err(Error::Config(format!("unknown config key '{bad}'")));
        }
        serde_json::from_value(serde_json::Value::Object(map)).map_err(|e| Error::Config(format!("config json: {e}")))
    }

    /// Every recognised key.
    pub fn keys() -> Vec<String> {
        match serde_json::to_value(Self::default()).expect("config serializes") {
            serde_json::Value::Object(map) => map.keys().cloned().collect(),
            _ => unreachable!(),
        }
    }

    /// Set one key from its textual value, e.g. `("lambda1", "0.5")` or
    /// `("metric", "cosine")`. Dashes in the key are read as underscores.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let serde_json::Value::Object(mut map) = serde_json::to_value(&*self).expect("config serializes") else {
            unreachable!()
        };
        let slot = map
            .get_mut(&key)
            .ok_or_else(|| Error::Config(format!("unknown config key '{key}'")))?;
        let value = value.trim();
        *slot = match serde_json::from_str::<serde_json::Value>(value) {
            Ok(v @ (serde_json::Value::Number(_) | serde_json::Value::Bool(_) | serde_json::Value::Null)) => v,
            _ => serde_json::Value::String(value.to_ascii_lowercase().replace('-', "_")),
        };
        *self = serde_json::from_value(serde_json::Value::Object(map))
            .map_err(|e| Error::Config(format!("{key}={value}: {e}")))?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}
