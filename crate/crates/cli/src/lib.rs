//! Library side of the `smdl` binary: argument parsing, config resolution,
//! experiment drivers and output writers. The binary itself only maps the
//! result of [`run`] to an exit code.

pub mod args;
pub mod commands;
pub mod experiments;
pub mod output;

use std::path::Path;

use anyhow::Context;
use smdl_core::{FmMode, MetricChoice, RunConfig, SamplerKind};

use args::{Cli, Command, GlobalArgs, Overrides};

/// Successful run.
pub const EXIT_OK: i32 = 0;
/// I/O failure, numerical failure or bug.
pub const EXIT_INTERNAL: i32 = 1;
/// Invalid input: bad config value, malformed file, inconsistent shapes.
pub const EXIT_CONFIG: i32 = 2;
/// `oracle-check` found an instance violating its guarantee.
pub const EXIT_ORACLE: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    OracleViolation(String),
}

/// Exit code for an error returned by [`run`].
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CliError>() {
            return match e {
                CliError::Usage(_) => EXIT_CONFIG,
                CliError::OracleViolation(_) => EXIT_ORACLE,
            };
        }
        if let Some(e) = cause.downcast_ref::<smdl_core::Error>() {
            return if e.is_user_error() { EXIT_CONFIG } else { EXIT_INTERNAL };
        }
    }
    EXIT_INTERNAL
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(threads) = cli.global.threads {
        if threads == 0 {
            return Err(CliError::Usage("--threads must be >= 1".into()).into());
        }
        // Fails only if a pool already exists, e.g. when called twice in-process.
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            log::warn!("thread pool already initialised: {e}");
        }
    }
    let config = resolve_config(&cli.global)?;
    let out_dir = cli.global.out_dir.as_path();
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    match &cli.command {
        Command::Select(a) => commands::select(a, &config, out_dir),
        Command::Train(a) => commands::train(a, &config, out_dir),
        Command::Ablate(a) => commands::ablate(a, &config, out_dir),
        Command::Bench(a) => commands::bench(a, &config, out_dir),
        Command::OracleCheck(a) => commands::oracle_check(a, &config, out_dir),
        Command::GenSynth(a) => commands::gen_synth(a, &config, out_dir),
    }
}

/// Defaults, then the `--config` file, then individual flags.
pub fn resolve_config(global: &GlobalArgs) -> anyhow::Result<RunConfig> {
    let mut config = match &global.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    apply_overrides(&mut config, &global.overrides)?;
    if let Some(seed) = global.seed {
        config.selection.seed = seed;
    }
    Ok(config)
}

fn load_config(path: &Path) -> anyhow::Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| smdl_core::Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(RunConfig::from_json(&text)?)
}

pub fn apply_overrides(config: &mut RunConfig, o: &Overrides) -> anyhow::Result<()> {
    let w = &mut config.weights;
    let sel = &mut config.selection;
    let tr = &mut config.trainer;
    macro_rules! set {
        ($($src:ident => $dst:expr),* $(,)?) => {
            $(if let Some(v) = o.$src.clone() { $dst = v; })*
        };
    }
    set!(
        lambda1 => w.lambda1,
        lambda2 => w.lambda2,
        lambda3 => w.lambda3,
        lambda4 => w.lambda4,
        r_max => w.r_max,
        batch_size => sel.batch_size,
        partitions => sel.partitions,
        epsilon => sel.epsilon,
        refresh_rate => sel.refresh_rate,
        epochs => tr.epochs,
        learning_rate => tr.learning_rate,
        momentum => tr.momentum,
        weight_decay => tr.weight_decay,
        loss_based_exponent => tr.loss_based_exponent,
        hidden => tr.hidden,
    );
    if let Some(sigma) = o.gaussian_sigma {
        w.gaussian_sigma = Some(sigma);
    }
    if let Some(m) = &o.metric {
        w.metric = m.parse::<MetricChoice>()?;
    }
    if let Some(m) = &o.fm_mode {
        w.fm_mode = m.parse::<FmMode>()?;
    }
    if let Some(s) = &o.sampler {
        tr.sampler = s.parse::<SamplerKind>()?;
    }
    if o.epoch_without_replacement {
        tr.epoch_without_replacement = true;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_kind() {
        let oracle = anyhow::Error::from(CliError::OracleViolation("x".into()));
        assert_eq!(exit_code(&oracle), EXIT_ORACLE);
        let usage = anyhow::Error::from(CliError::Usage("x".into())).context("while parsing");
        assert_eq!(exit_code(&usage), EXIT_CONFIG);
        let config = anyhow::Error::from(smdl_core::Error::Config("bad".into()));
        assert_eq!(exit_code(&config), EXIT_CONFIG);
        let numeric = anyhow::Error::from(smdl_core::Error::NonFinite("nan".into()));
        assert_eq!(exit_code(&numeric), EXIT_INTERNAL);
        assert_eq!(exit_code(&anyhow::anyhow!("disk full")), EXIT_INTERNAL);
    }
}
