//! Experiment drivers shared by the CLI and the acceptance suite.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use smdl_core::maximize::{greedy_bound, partitioned_bound};
use smdl_core::synth::{random_instance, random_instance_with};
use smdl_core::{
    brute_force, get_mini_batch, greedy, sample_size, train, validate_config, BruteForceMode, Dataset, FmMode,
    Objective, ObjectiveWeights, Rng, RunConfig, ScoreCache,
};

use crate::args::{Preset, Suite};
use crate::CliError;

// ---------------------------------------------------------------------------
// Oracle checks

/// Instance size for the brute-force comparisons: C(12, 3) = 220 subsets.
pub const ORACLE_N: usize = 12;
pub const ORACLE_DIM: usize = 3;
pub const GREEDY_B: usize = 3;
pub const PARTITIONED_B: usize = 2;
pub const PARTITIONED_M: usize = 3;

#[derive(Debug, Clone, Serialize)]
pub struct OracleRow {
    pub instance_seed: u64,
    pub greedy_value: f64,
    pub opt_value: f64,
    pub ratio: f64,
    pub bound: f64,
    pub suite: &'static str,
    pub ok: bool,
}

impl Suite {
    /// Whether a violation in this suite is a failed guarantee.
    pub fn is_guarantee(self) -> bool {
        !matches!(self, Suite::Chain)
    }

    pub fn name(self) -> &'static str {
        match self {
            Suite::Greedy => "greedy",
            Suite::Modular => "modular",
            Suite::Partitioned => "partitioned",
            Suite::Chain => "chain",
            Suite::All => "all",
        }
    }
}

pub fn default_instances(suite: Suite) -> usize {
    match suite {
        Suite::Greedy | Suite::Modular | Suite::Chain => 200,
        Suite::Partitioned => 100,
        Suite::All => 0,
    }
}

/// Random instance with weights drawn from the instance seed. Without the
/// redundancy term the set value is monotone submodular.
pub fn oracle_instance(seed: u64, fm_mode: FmMode, redundancy: bool) -> (Dataset, ObjectiveWeights, ScoreCache) {
    let data = random_instance(seed, ORACLE_N, ORACLE_DIM);
    let mut rng = Rng::new(seed).fork_named("weights");
    let mut draw = || 0.05 + 0.95 * rng.unit();
    let (l1, l2, l3, l4) = (draw(), draw(), draw(), draw());
    let mut weights = ObjectiveWeights::with_lambdas(l1, if redundancy { l2 } else { 0.0 }, l3, l4);
    weights.fm_mode = fm_mode;
    let cache = ScoreCache::compute(&data, &weights, 0, &Rng::new(seed).fork_named("scores")).expect("valid instance");
    (data, weights, cache)
}

fn oracle_row(suite: Suite, seed: u64, epsilon: f64) -> smdl_core::Result<OracleRow> {
    let fm_mode = if suite == Suite::Modular {
        FmMode::Modular
    } else {
        FmMode::Set
    };
    let (data, weights, cache) = oracle_instance(seed, fm_mode, suite == Suite::Chain);
    let objective = Objective::new(&data, &cache, &weights)?;
    let all: Vec<usize> = (0..data.len()).collect();
    if suite == Suite::Chain {
        let found = greedy(&objective, &all, GREEDY_B);
        let opt = brute_force(&objective, &all, GREEDY_B, BruteForceMode::Chain)?;
        let ratio = if opt.chain_value > 0.0 {
            found.chain_value / opt.chain_value
        } else {
            1.0
        };
        return Ok(OracleRow {
            instance_seed: seed,
            greedy_value: found.chain_value,
            opt_value: opt.chain_value,
            ratio,
            bound: greedy_bound(),
            suite: suite.name(),
            ok: found.chain_value + 1e-9 * opt.chain_value.abs().max(1.0) >= greedy_bound() * opt.chain_value,
        });
    }
    let (found, b, bound) = match suite {
        Suite::Greedy => (greedy(&objective, &all, GREEDY_B), GREEDY_B, greedy_bound()),
        Suite::Modular => (greedy(&objective, &all, GREEDY_B), GREEDY_B, 1.0),
        Suite::Partitioned => {
            let (b, m) = (PARTITIONED_B, PARTITIONED_M);
            let s = sample_size(all.len(), b, epsilon, all.len().div_ceil(m));
            let rng = Rng::new(seed).fork_named("partitioned");
            let found = get_mini_batch(&objective, &all, b, m, s, &rng)?;
            (found, b, partitioned_bound(m, b, epsilon))
        }
        Suite::Chain | Suite::All => unreachable!("handled above / expanded by caller"),
    };
    let opt = brute_force(&objective, &all, b, BruteForceMode::Set)?;
    let ratio = if opt.set_value > 0.0 {
        found.set_value / opt.set_value
    } else {
        1.0
    };
    let tol = 1e-9 * opt.set_value.abs().max(1.0);
    Ok(OracleRow {
        instance_seed: seed,
        greedy_value: found.set_value,
        opt_value: opt.set_value,
        ratio,
        bound,
        suite: suite.name(),
        ok: found.set_value + tol >= bound * opt.set_value,
    })
}

/// Rows for `instances` consecutive seeds starting at `base_seed`.
pub fn oracle_suite(suite: Suite, instances: usize, base_seed: u64, epsilon: f64) -> smdl_core::Result<Vec<OracleRow>> {
    let suites = match suite {
        Suite::All => vec![Suite::Greedy, Suite::Modular, Suite::Partitioned, Suite::Chain],
        s => vec![s],
    };
    let mut rows = Vec::new();
    for s in suites {
        let count = if instances == 0 {
            default_instances(s)
        } else {
            instances
        };
        let seeds: Vec<u64> = (0..count as u64).map(|k| base_seed.wrapping_add(k)).collect();
        let part: smdl_core::Result<Vec<_>> = seeds.par_iter().map(|&seed| oracle_row(s, seed, epsilon)).collect();
        rows.extend(part?);
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Scaling benchmark

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub s: usize,
    pub repeats: usize,
    pub mean_time: f64,
    pub mean_evals: f64,
    pub max_evals: u64,
    /// m·b·s + b·s.
    pub bound: u64,
}

/// Time partitioned selection on random instances of each size. Scores are
/// computed once per size and excluded from the timing.
pub fn bench_selection(
    sizes: &[usize],
    repeats: usize,
    dim: usize,
    config: &RunConfig,
) -> anyhow::Result<Vec<BenchRow>> {
    if sizes.is_empty() || repeats == 0 {
        return Err(CliError::Usage("bench needs at least one size and one repeat".into()).into());
    }
    let mut sizes = sizes.to_vec();
    sizes.sort_unstable();
    sizes.dedup();
    let sel = &config.selection;
    let mut rows = Vec::with_capacity(sizes.len());
    for n in sizes {
        let data = random_instance_with(sel.seed ^ n as u64, n, dim, 10, 16);
        let weights = data.effective_weights(&config.weights);
        let checked = validate_config(&weights, sel, n)?;
        let root = Rng::new(sel.seed).fork(n as u64);
        let cache = ScoreCache::compute(&data, &weights, 0, &root.fork_named("scores"))?;
        let objective = Objective::new(&data, &cache, &weights)?;
        let ground: Vec<usize> = (0..n).collect();
        let (b, m, s) = (sel.batch_size, sel.partitions, checked.sample_size);
        // Warm-up run, untimed.
        get_mini_batch(&objective, &ground, b, m, s, &root.fork_named("warmup"))?;
        let mut total = 0.0;
        let mut evals = Vec::with_capacity(repeats);
        for r in 0..repeats {
            let start = Instant::now();
            let result = get_mini_batch(&objective, &ground, b, m, s, &root.fork(r as u64))?;
            total += start.elapsed().as_secs_f64();
            evals.push(result.gain_evaluations);
        }
        rows.push(BenchRow {
            n,
            s,
            repeats,
            mean_time: total / repeats as f64,
            mean_evals: evals.iter().sum::<u64>() as f64 / repeats as f64,
            max_evals: evals.iter().copied().max().unwrap_or(0),
            bound: (m * b * s + b * s) as u64,
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Ablation

/// One grid cell: config keys applied on top of the base config, in order.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub label: String,
    pub settings: Vec<(String, String)>,
}

impl Cell {
    fn from_settings(settings: Vec<(String, String)>) -> Self {
        let label = settings
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";");
        Self { label, settings }
    }

    pub fn apply(&self, base: &RunConfig) -> smdl_core::Result<RunConfig> {
        let mut cfg = base.clone();
        for (k, v) in &self.settings {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }
}

/// Parse `key=v1,v2,...`.
pub fn parse_axis(spec: &str) -> Result<(String, Vec<String>), CliError> {
    let (key, values) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("grid axis '{spec}' is not key=v1,v2,...")))?;
    let key = key.trim().replace('-', "_");
    let values: Vec<String> = values
        .split(',')
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
        .collect();
    if key.is_empty() || values.is_empty() {
        return Err(CliError::Usage(format!("grid axis '{spec}' has no key or no values")));
    }
    if !RunConfig::keys().contains(&key) {
        return Err(CliError::Usage(format!("grid axis '{key}' is not a config key")));
    }
    Ok((key, values))
}

/// Cartesian product of the axes, first axis varying slowest.
pub fn grid_cells(axes: &[(String, Vec<String>)]) -> Vec<Cell> {
    if axes.is_empty() {
        return Vec::new();
    }
    let mut combos: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for (key, values) in axes {
        combos = combos
            .into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |v| {
                    let mut next = prefix.clone();
                    next.push((key.clone(), v.clone()));
                    next
                })
            })
            .collect();
    }
    combos.into_iter().map(Cell::from_settings).collect()
}

const LAMBDA_SWEEP: [&str; 5] = ["0", "0.2", "0.5", "0.8", "1"];

fn kv(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

pub fn preset_cells(preset: Preset) -> Vec<Cell> {
    let smdl = ("sampler", "smdl");
    let lambda_sweep = |i: usize| -> Vec<Cell> {
        let key = format!("lambda{i}");
        LAMBDA_SWEEP
            .iter()
            .map(|&v| {
                // Every other term off except redundancy at 0.5.
                let mut s = kv(&[
                    ("lambda1", "0"),
                    ("lambda2", "0.5"),
                    ("lambda3", "0"),
                    ("lambda4", "0"),
                    smdl,
                ]);
                s.retain(|(k, _)| *k != key);
                let mut cell = Cell::from_settings(vec![(key.clone(), v.to_string())]);
                cell.settings.extend(s);
                cell
            })
            .collect()
    };
    let with_sampler = |key: &str, values: &[&str]| -> Vec<Cell> {
        grid_cells(&[
            ("sampler".to_string(), vec!["smdl".to_string(), "uniform".to_string()]),
            (key.to_string(), values.iter().map(|v| v.to_string()).collect()),
        ])
    };
    match preset {
        Preset::Lambda1 => lambda_sweep(1),
        Preset::Lambda3 => lambda_sweep(3),
        Preset::Lambda4 => lambda_sweep(4),
        Preset::Lambda2 => LAMBDA_SWEEP
            .iter()
            .map(|&v| {
                let mut cell = Cell::from_settings(vec![("lambda2".into(), v.into())]);
                cell.settings
                    .extend(kv(&[("lambda1", "0.5"), ("lambda3", "0.8"), ("lambda4", "0.2"), smdl]));
                cell
            })
            .collect(),
        Preset::Metrics => ["euclidean", "cosine", "correlation", "gaussian"]
            .iter()
            .map(|&m| {
                let mut cell = Cell::from_settings(vec![("metric".into(), m.into())]);
                cell.settings.push(("sampler".into(), "smdl".into()));
                cell
            })
            .collect(),
        Preset::SmdlTerms => (1..=4)
            .map(|i| {
                let mut settings: Vec<(String, String)> = (1..=4)
                    .map(|j| (format!("lambda{j}"), if i == j { "1" } else { "0" }.to_string()))
                    .collect();
                settings.push(("sampler".into(), "smdl".into()));
                Cell {
                    label: format!("SMDL-{i}"),
                    settings,
                }
            })
            .collect(),
        Preset::LearningRate => with_sampler("learning_rate", &["0.1", "0.01", "0.001"]),
        Preset::BatchSize => with_sampler("batch_size", &["50", "100", "200"]),
        Preset::RefreshRate => grid_cells(&[
            ("sampler".to_string(), vec!["smdl".to_string()]),
            (
                "refresh_rate".to_string(),
                ["1", "5", "10", "20"].iter().map(|v| v.to_string()).collect(),
            ),
        ]),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub cell: String,
    pub seed: u64,
    pub mean_acc: f64,
    pub final_acc: f64,
    pub mean_loss: f64,
    pub final_loss: f64,
}

/// One training run per (cell, seed); seeds are `base.seed + k`. Rows come
/// back in cell-major, seed-minor order regardless of scheduling.
pub fn run_ablation(
    train_set: &Dataset,
    test_set: &Dataset,
    base: &RunConfig,
    cells: &[Cell],
    seeds: u64,
) -> anyhow::Result<Vec<AblationRow>> {
    if cells.is_empty() {
        return Err(CliError::Usage("ablation grid is empty".into()).into());
    }
    if seeds == 0 {
        return Err(CliError::Usage("--seeds must be >= 1".into()).into());
    }
    // Reject bad cells before spending any time training.
    let configs = cells
        .iter()
        .map(|c| c.apply(base))
        .collect::<smdl_core::Result<Vec<_>>>()?;
    let jobs: Vec<(usize, u64)> = (0..cells.len()).flat_map(|c| (0..seeds).map(move |k| (c, k))).collect();
    let rows: smdl_core::Result<Vec<AblationRow>> = jobs
        .par_iter()
        .map(|&(c, k)| {
            let mut cfg = configs[c].clone();
            cfg.selection.seed = base.selection.seed.wrapping_add(k);
            let outcome = train(train_set, test_set, &cfg.trainer, &cfg.selection, &cfg.weights)?;
            let summary = outcome.summary();
            Ok(AblationRow {
                cell: cells[c].label.clone(),
                seed: cfg.selection.seed,
                mean_acc: summary.mean_accuracy,
                final_acc: summary.final_accuracy,
                mean_loss: summary.mean_loss,
                final_loss: summary.final_loss,
            })
        })
        .collect();
    Ok(rows?)
}
