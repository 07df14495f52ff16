use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dissipative_ising_cli::error::{CliError, CliResult};
use dissipative_ising_cli::{presets, run_config, validate_config, RunOptions};

#[derive(Parser)]
#[command(name = "dissipative-ising", version, about = "Dissipative Ising spin dynamics: closed forms, trajectories and master equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configuration and write the data table plus a `.meta.json` sidecar.
    Run {
        config: PathBuf,
        /// Directory that `output.path` is resolved against.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; results do not depend on this.
        #[arg(long)]
        threads: Option<usize>,
        /// Overrides `run.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Omit the timestamp from the metadata.
        #[arg(long)]
        no_timestamp: bool,
    },
    /// Check a configuration without running it.
    Validate { config: PathBuf },
    /// Print a shipped configuration; `list` prints the names.
    Preset { name: String },
}

fn configure_threads(threads: Option<usize>) -> CliResult<()> {
    let Some(k) = threads else {
        return Ok(());
    };
    if k == 0 {
        return Err(CliError::Config("--threads must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(k)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot configure thread pool: {e}")))
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            threads,
            seed,
            no_timestamp,
        } => {
            configure_threads(threads)?;
            let opts = RunOptions {
                out_dir: out,
                seed,
                timestamp: !no_timestamp,
            };
            let w = run_config(&config, &opts)?;
            eprintln!(
                "wrote {} ({} rows, {} columns) and {}",
                w.data.display(),
                w.rows,
                w.columns,
                w.metadata.display()
            );
        }
        Command::Validate { config } => {
            let plan = validate_config(&config)?;
            println!(
                "{}: ok ({} spins, backend {}, {} time points, {} observables)",
                config.display(),
                plan.n(),
                plan.config.run.backend.name(),
                plan.times.len(),
                plan.config.run.observables.len()
            );
        }
        Command::Preset { name } => {
            if name == "list" {
                for n in presets::names() {
                    println!("{n}");
                }
                return Ok(());
            }
            let text = presets::find(&name).ok_or_else(|| {
                CliError::Config(format!(
                    "unknown preset {name:?}; available: {}",
                    presets::names().collect::<Vec<_>>().join(", ")
                ))
            })?;
            print!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
