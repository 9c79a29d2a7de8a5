//! Output writers. Every file starts with (CSV/text) or contains (JSON) the
//! fully resolved config, seed included, so a result can be re-run from the
//! file alone.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use serde::Serialize;
use smdl_core::RunConfig;

pub fn config_line(config: &RunConfig) -> String {
    format!("# config: {}", config.to_json())
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

/// Config comment line followed by a CSV table with a header row.
pub fn write_csv<T: Serialize>(path: &Path, config: &RunConfig, rows: &[T]) -> anyhow::Result<()> {
    let mut out = create(path)?;
    writeln!(out, "{}", config_line(config))?;
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Config comment line followed by one value per line.
pub fn write_lines<T: std::fmt::Display>(path: &Path, config: &RunConfig, items: &[T]) -> anyhow::Result<()> {
    let mut out = create(path)?;
    writeln!(out, "{}", config_line(config))?;
    for item in items {
        writeln!(out, "{item}")?;
    }
    out.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Pretty JSON object with the config stored under `"config"`.
pub fn write_json(path: &Path, config: &RunConfig, body: serde_json::Value) -> anyhow::Result<()> {
    let mut body = match body {
        serde_json::Value::Object(map) => map,
        other => {
            let mut map = serde_json::Map::new();
            map.insert("result".into(), other);
            map
        }
    };
    body.insert("config".into(), serde_json::to_value(config)?);
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, &body)?;
    writeln!(out)?;
    out.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
