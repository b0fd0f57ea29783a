//! Artifacts of a run. The configuration echo is written before anything is
//! solved, so an aborted run still records what was attempted.

use std::fs;
use std::path::Path;

use crate::config::ScenarioConfig;
use crate::error::HarnessError;
use crate::pipeline::{Outcome, Table};

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn put(path: &Path, text: &str) -> Result<(), HarnessError> {
    fs::write(path, text).map_err(io(path))
}

pub fn write_echo(dir: &Path, cfg: &ScenarioConfig) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    put(&dir.join("config.toml"), &cfg.echo())
}

pub fn summary_json(outcome: &Outcome) -> String {
    let mut s = serde_json::to_string_pretty(&outcome.summary).expect("summary serializes");
    s.push('\n');
    s
}

pub fn table_csv(hash: &str, table: &Table) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| HarnessError::Config(format!("{}: {e}", table.file));
    w.write_record(std::iter::once("config_hash").chain(table.header.iter().copied()))
        .map_err(fail)?;
    for row in &table.rows {
        w.write_record(std::iter::once(hash).chain(row.iter().map(String::as_str)))
            .map_err(fail)?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_outcome(dir: &Path, outcome: &Outcome) -> Result<(), HarnessError> {
    put(&dir.join("summary.json"), &summary_json(outcome))?;
    for t in &outcome.tables {
        put(&dir.join(t.file), &table_csv(&outcome.summary.config_hash, t)?)?;
    }
    Ok(())
}

pub fn write_error(dir: &Path, err: &HarnessError) -> Result<(), HarnessError> {
    put(
        &dir.join("error.txt"),
        &format!("{err}\nexit code {}\n", err.exit_code()),
    )
}
