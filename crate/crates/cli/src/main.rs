//! Command-line front end. Exit codes: 0 success, 1 a failed validation
//! criterion, 2 a configuration or I/O error, 3 a numerical error.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use orthoglass::Execution;

use config::{Command, ConfigError, ExperimentConfig, Format};

#[derive(Debug, Parser)]
#[command(
    name = "orthoglass",
    version,
    about = "RS free energies, state evolution and AMP for orthogonally invariant spin glasses"
)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON experiment configuration. Optional for `validate`.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for the parallel paths.
    #[arg(long)]
    threads: Option<usize>,
    /// Run every loop sequentially. Results are identical either way.
    #[arg(long)]
    sequential: bool,
    /// Output file; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Also write AMP iterates next to `--out`.
    #[arg(long)]
    raw_dump: bool,
}

enum Failure {
    Config(String),
    Numeric(orthoglass::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::from_str("{}", "defaults")?,
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if let Some(p) = &cli.out {
        cfg.output.path = Some(p.display().to_string());
    }
    if let Some(f) = cli.format {
        cfg.output.format = f;
    }
    cfg.output.raw_dump |= cli.raw_dump;
    cfg.check(cli.command)?;
    if cfg.output.raw_dump && (cli.command != Command::Amp || cfg.output.path.is_none()) {
        return Err(Failure::Config("raw_dump needs the `amp` command and an output path".into()));
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<bool, Failure> {
    let cfg = load(cli)?;
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    let outcome = orthoglass::par::with_threads(cli.threads, || commands::run(cli.command, &cfg, exec))
        .map_err(Failure::Numeric)?;

    let path = cfg.output.path.as_ref().map(PathBuf::from);
    let io_err = |e: std::io::Error| Failure::Config(format!("writing output: {e}"));
    match cfg.output.format {
        Format::Json => {
            let report = output::Report {
                command: cli.command.name(),
                version: env!("CARGO_PKG_VERSION"),
                config_hash: cfg.hash(),
                seed: cfg.seed,
                results: &outcome.results,
                timing: &outcome.timing,
            };
            output::write_json(&report, path.as_deref()).map_err(io_err)?;
        }
        Format::Csv => output::write_csv(&outcome.table, path.as_deref()).map_err(io_err)?,
    }
    if let (Some(raw), Some(p)) = (&outcome.raw, &path) {
        let (bin, side) = output::write_raw(raw, p).map_err(io_err)?;
        log::info!("wrote {} and {}", bin.display(), side.display());
    }
    Ok(outcome.passed)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("orthoglass: validation failed");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("orthoglass: configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(e)) => {
            eprintln!("orthoglass: {e}");
            ExitCode::from(3)
        }
    }
}
