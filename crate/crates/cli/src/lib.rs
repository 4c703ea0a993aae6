//! Experiment driver: loads a JSON config and runs the certification,
//! simulation, bounds, and diagnostics pipelines, writing CSV/JSON artifacts.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};

pub use config::ExperimentConfig;
pub use error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Certify,
    Bounds,
    Simulate,
    Diagnose,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Certify => "certify",
            Command::Bounds => "bounds",
            Command::Simulate => "simulate",
            Command::Diagnose => "diagnose",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "tailwalk", version, about = "Tail bounds for heavy-tailed random walks")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// Experiment configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Overrides `simulate.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Runs one command and returns the primary output files it wrote.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let mut cfg = ExperimentConfig::load(&cli.config)?;
    cfg.override_seed(cli.seed);
    cfg.validate()?;
    std::fs::create_dir_all(&cli.out)?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be >= 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        let result = dispatch(cli.command, &cfg, &cli.out);
        let outputs = match &result {
            Ok(files) => files.clone(),
            Err(_) => Vec::new(),
        };
        output::write_metadata(&cli.out, cli.command.name(), &cli.config, &outputs)?;
        result
    })
}

fn dispatch(cmd: Command, cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    match cmd {
        Command::Certify => commands::cmd_certify(cfg, out),
        Command::Bounds => commands::cmd_bounds(cfg, out),
        Command::Simulate => commands::cmd_simulate(cfg, out),
        Command::Diagnose => commands::cmd_diagnose(cfg, out),
    }
}
