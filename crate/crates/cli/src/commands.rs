//! Subcommand bodies.

use std::path::Path;
use std::time::Instant;

use anyhow::Context;
use serde::Serialize;
use serde_json::json;
use smdl_core::synth::{gen_blobs, BlobSpec};
use smdl_core::{load_dataset, select_batch, train as train_model, Dataset, DatasetPaths, MatrixFormat, RunConfig};

use crate::args::{AblateArgs, BenchArgs, Format, GenSynthArgs, OracleArgs, SelectArgs, Suite, TrainArgs};
use crate::experiments::{bench_selection, grid_cells, oracle_suite, parse_axis, preset_cells, run_ablation};
use crate::output::{write_csv, write_json, write_lines};
use crate::CliError;

fn load_split(dir: &Path, prefix: &str) -> anyhow::Result<Dataset> {
    DatasetPaths::discover(dir, prefix)
        .load()
        .with_context(|| format!("loading '{prefix}' split from {}", dir.display()))
}

#[derive(Serialize)]
struct TraceRow {
    step: usize,
    index: usize,
    gain: f64,
    chain_value: f64,
}

#[derive(Serialize)]
struct ScoreRow {
    index: usize,
    u: f64,
    mc: f64,
    fm: f64,
}

pub fn select(args: &SelectArgs, config: &RunConfig, out: &Path) -> anyhow::Result<()> {
    let dataset = match (&args.data, &args.features, &args.probs, &args.labels) {
        (Some(dir), ..) => load_split(dir, &args.prefix)?,
        (None, Some(f), Some(p), Some(l)) => load_dataset(f, p, l, args.fixed_features.as_deref())?,
        _ => {
            return Err(CliError::Usage("select needs --data <dir> or --features, --probs and --labels".into()).into())
        }
    };
    let start = Instant::now();
    let (result, cache) = select_batch(&dataset, &config.weights, &config.selection)?;
    log::info!(
        "selected {} of {} points in {:.3}s ({} gain evaluations)",
        result.indices.len(),
        dataset.len(),
        start.elapsed().as_secs_f64(),
        result.gain_evaluations
    );

    write_lines(&out.join("indices.txt"), config, &result.indices)?;
    let trace: Vec<TraceRow> = result
        .trace
        .iter()
        .enumerate()
        .map(|(step, t)| TraceRow {
            step,
            index: t.index,
            gain: t.gain,
            chain_value: t.chain_value,
        })
        .collect();
    write_csv(&out.join("gain_trace.csv"), config, &trace)?;
    let sel = &config.selection;
    let n = dataset.len();
    let sample_size = smdl_core::sample_size(n, sel.batch_size, sel.epsilon, sel.max_partition_size(n));
    write_json(
        &out.join("selection.json"),
        config,
        json!({
            "n": dataset.len(),
            "batch_size": result.indices.len(),
            "sample_size": sample_size,
            "chain_value": result.chain_value,
            "set_value": result.set_value,
            "gain_evaluations": result.gain_evaluations,
        }),
    )?;
    if args.dump_cache {
        let rows: Vec<ScoreRow> = (0..cache.len())
            .map(|i| ScoreRow {
                index: i,
                u: cache.u_scores[i],
                mc: cache.mc_scores[i],
                fm: cache.fm_scores[i],
            })
            .collect();
        write_csv(&out.join("scores.csv"), config, &rows)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct EpochRow {
    epoch: usize,
    train_loss: f64,
    train_accuracy: f64,
    test_loss: f64,
    test_accuracy: f64,
    batches_selected: usize,
}

#[derive(Serialize)]
struct TimingRow {
    epoch: usize,
    selection_time: f64,
    step_time: f64,
}

pub fn train(args: &TrainArgs, config: &RunConfig, out: &Path) -> anyhow::Result<()> {
    let train_set = load_split(&args.data, "train")?;
    let test_set = load_split(&args.data, "test")?;
    let outcome = train_model(
        &train_set,
        &test_set,
        &config.trainer,
        &config.selection,
        &config.weights,
    )?;
    let epochs: Vec<EpochRow> = outcome
        .reports
        .iter()
        .map(|r| EpochRow {
            epoch: r.epoch,
            train_loss: r.train_loss,
            train_accuracy: r.train_accuracy,
            test_loss: r.test_loss,
            test_accuracy: r.test_accuracy,
            batches_selected: r.batches_selected,
        })
        .collect();
    let timing: Vec<TimingRow> = outcome
        .reports
        .iter()
        .map(|r| TimingRow {
            epoch: r.epoch,
            selection_time: r.selection_time,
            step_time: r.step_time,
        })
        .collect();
    write_csv(&out.join("epochs.csv"), config, &epochs)?;
    write_csv(&out.join("timing.csv"), config, &timing)?;
    let summary = outcome.summary();
    write_json(
        &out.join("summary.json"),
        config,
        json!({
            "mean_accuracy": summary.mean_accuracy,
            "final_accuracy": summary.final_accuracy,
            "mean_loss": summary.mean_loss,
            "final_loss": summary.final_loss,
            "iterations": outcome.iterations,
            "score_recomputations": outcome.score_recomputations,
        }),
    )?;
    println!(
        "final test accuracy {:.4}, mean {:.4}",
        summary.final_accuracy, summary.mean_accuracy
    );
    Ok(())
}

pub fn ablate(args: &AblateArgs, config: &RunConfig, out: &Path) -> anyhow::Result<()> {
    let axes = args.grid.iter().map(|g| parse_axis(g)).collect::<Result<Vec<_>, _>>()?;
    let mut cells = args.preset.map(preset_cells).unwrap_or_default();
    cells.extend(grid_cells(&axes));
    if cells.is_empty() {
        return Err(CliError::Usage("ablation grid is empty: pass --grid key=v1,v2 or --preset".into()).into());
    }
    let train_set = load_split(&args.data, "train")?;
    let test_set = load_split(&args.data, "test")?;
    let rows = run_ablation(&train_set, &test_set, config, &cells, args.seeds)?;
    write_csv(&out.join("ablation.csv"), config, &rows)?;
    println!(
        "{} cells x {} seeds -> {}",
        cells.len(),
        args.seeds,
        out.join("ablation.csv").display()
    );
    Ok(())
}

pub fn bench(args: &BenchArgs, config: &RunConfig, out: &Path) -> anyhow::Result<()> {
    let rows = bench_selection(&args.sizes, args.repeats, args.dim, config)?;
    for r in &rows {
        println!(
            "n={:>8} s={:>6} mean_time={:.4}s mean_evals={:.0} bound={}",
            r.n, r.s, r.mean_time, r.mean_evals, r.bound
        );
    }
    write_csv(&out.join("bench.csv"), config, &rows)
}

pub fn oracle_check(args: &OracleArgs, config: &RunConfig, out: &Path) -> anyhow::Result<()> {
    let rows = oracle_suite(
        args.suite,
        args.instances.unwrap_or(0),
        config.selection.seed,
        config.selection.epsilon,
    )?;
    write_csv(&out.join("oracle.csv"), config, &rows)?;
    let mut suites: Vec<&str> = rows.iter().map(|r| r.suite).collect();
    suites.dedup();
    let mut violations = 0;
    for suite in suites {
        let part: Vec<_> = rows.iter().filter(|r| r.suite == suite).collect();
        let bad = part.iter().filter(|r| !r.ok).count();
        let mean = part.iter().map(|r| r.ratio).sum::<f64>() / part.len() as f64;
        let min = part.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
        let guarantee = suite != Suite::Chain.name();
        println!(
            "{suite}: {} instances, bound {:.4}, min ratio {min:.4}, mean ratio {mean:.4}, {} {bad}",
            part.len(),
            part[0].bound,
            if guarantee {
                "violations"
            } else {
                "below bound (informational)"
            }
        );
        if guarantee {
            violations += bad;
        }
    }
    if violations > 0 {
        return Err(CliError::OracleViolation(format!("{violations} instance(s) violate their guarantee")).into());
    }
    Ok(())
}

pub fn gen_synth(args: &GenSynthArgs, config: &RunConfig, out: &Path) -> anyhow::Result<()> {
    let spec = BlobSpec {
        classes: args.classes,
        dim: args.dim,
        train: args.train,
        test: args.test,
        noise: args.noise,
        separation: args.separation,
    };
    let (train_set, test_set) = gen_blobs(&spec, config.selection.seed)?;
    let format = match args.format {
        Format::Bin => MatrixFormat::Binary,
        Format::Csv => MatrixFormat::Csv,
    };
    train_set.save(out, "train", format)?;
    test_set.save(out, "test", format)?;
    write_json(
        &out.join("synth.json"),
        config,
        json!({
            "classes": spec.classes,
            "dim": spec.dim,
            "train": spec.train,
            "test": spec.test,
            "noise": spec.noise,
            "separation": spec.separation,
        }),
    )?;
    Ok(())
}
