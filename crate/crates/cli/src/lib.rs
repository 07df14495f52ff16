//! Batch front-end for the dissipative Ising simulator.

pub mod config;
pub mod error;
pub mod output;
pub mod presets;
pub mod run;

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use config::{Plan, Source};
use error::CliResult;

/// Options that do not live in the config file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<std::path::PathBuf>,
    pub seed: Option<u64>,
    pub timestamp: bool,
}

/// Files written by [`run_config`].
#[derive(Debug, Clone)]
pub struct Written {
    pub data: std::path::PathBuf,
    pub metadata: std::path::PathBuf,
    pub rows: usize,
    pub columns: usize,
}

/// Parses and validates a config without running it.
pub fn validate_config(path: &Path) -> CliResult<Plan> {
    Plan::from_source(&Source::read(path)?, None)
}

/// Runs a config file and writes the data table and metadata sidecar.
pub fn run_config(path: &Path, opts: &RunOptions) -> CliResult<Written> {
    let src = Source::read(path)?;
    let plan = Plan::from_source(&src, opts.seed)?;
    let out = run::execute(&plan)?;
    let cols = output::columns(&out);
    let dir = opts.out_dir.clone().unwrap_or_default();
    let (data, metadata) = output::output_paths(&plan, &dir);
    if let Some(parent) = data.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| error::CliError::io(parent.display().to_string(), e))?;
    }
    match plan.config.output.format {
        config::Format::Csv => output::write_csv(&data, &cols)?,
        config::Format::Json => output::write_json(&data, &cols)?,
    }
    let timestamp = opts
        .timestamp
        .then(|| SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()));
    output::write_pretty(&metadata, &output::metadata(&plan, &out, &cols, timestamp))?;
    Ok(Written {
        data,
        metadata,
        rows: out.times.len(),
        columns: cols.len(),
    })
}
