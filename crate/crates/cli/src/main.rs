//! `rsjd` — simulation and certification experiments for
//! regime-switching jump diffusions, driven by a strict TOML config.
//!
//! Exit codes: 0 success, 1 experiment-level failure (a failed
//! certificate or agreement check under `--expect-pass`), 2 configuration
//! error.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Experiment(String),
}

impl From<rsjd_core::Error> for CliError {
    fn from(e: rsjd_core::Error) -> Self {
        match e {
            rsjd_core::Error::Degenerate(msg) => CliError::Experiment(msg),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config: {m}"),
            CliError::Io(m) => write!(f, "io: {m}"),
            CliError::Experiment(m) => write!(f, "experiment: {m}"),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "rsjd",
    version,
    about = "Simulation and certification toolkit for regime-switching jump diffusions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Exit 1 unless the experiment's own pass criterion holds.
    #[arg(long, global = true)]
    expect_pass: bool,

    /// Dotted config overrides, e.g. `--set run.dt=0.001`.
    #[arg(long = "set", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an ensemble of hybrid paths.
    Simulate,
    /// Coupled-pair experiments: contraction and decoupling estimates.
    Couple,
    /// Evaluate the extended generator and run Dynkin residual tests.
    GeneratorTest,
    /// Truncated jump-count series for a Gaussian-kernel regime.
    KernelSeries,
    /// Importance sampling through the auxiliary constant-rate chain.
    ChangeMeasure,
    /// Check a Foster-Lyapunov drift certificate at sampled points.
    DriftCheck,
    /// Search for drift constants over an alpha grid.
    DriftFit,
    /// Linearized-at-infinity sufficient conditions.
    LinearizedCheck,
    /// Empirical convergence to the long-run law.
    Ergodicity,
    /// Closed-form conditions for the coupled OU family.
    OuExample,
    /// Probe the model assumptions.
    Validate,
    /// List registered model families.
    ListModels {
        /// Substring filter.
        #[arg(default_value = "")]
        filter: String,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Couple => "couple",
            Command::GeneratorTest => "generator-test",
            Command::KernelSeries => "kernel-series",
            Command::ChangeMeasure => "change-measure",
            Command::DriftCheck => "drift-check",
            Command::DriftFit => "drift-fit",
            Command::LinearizedCheck => "linearized-check",
            Command::Ergodicity => "ergodicity",
            Command::OuExample => "ou-example",
            Command::Validate => "validate",
            Command::ListModels { .. } => "list-models",
        }
    }
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    if let Command::ListModels { filter } = &cli.command {
        return commands::list_models(filter);
    }
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config: required".into()))?;
    let (cfg, canonical) = config::load(config_path, &cli.overrides)?;
    let out_dir = cli
        .out
        .clone()
        .or_else(|| cfg.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let mut out = output::OutputDir::create(&out_dir)?;

    let started = Instant::now();
    let passed = match &cli.command {
        Command::Simulate => commands::simulate(&cfg, cli.seed, &mut out)?,
        Command::Couple => commands::couple(&cfg, cli.seed, &mut out)?,
        Command::GeneratorTest => commands::generator_test(&cfg, cli.seed, &mut out)?,
        Command::KernelSeries => commands::kernel_series(&cfg, cli.seed, &mut out)?,
        Command::ChangeMeasure => commands::change_measure(&cfg, cli.seed, &mut out)?,
        Command::DriftCheck => commands::drift_check(&cfg, cli.seed, &mut out)?,
        Command::DriftFit => commands::drift_fit(&cfg, cli.seed, &mut out)?,
        Command::LinearizedCheck => commands::linearized_check(&cfg, cli.seed, &mut out)?,
        Command::Ergodicity => commands::ergodicity(&cfg, cli.seed, &mut out)?,
        Command::OuExample => commands::ou_example(&cfg, cli.seed, &mut out)?,
        Command::Validate => commands::validate(&cfg, &mut out)?,
        Command::ListModels { .. } => unreachable!(),
    };

    let seed = cli
        .seed
        .or(cfg.run.as_ref().and_then(|r| r.seed))
        .unwrap_or(0);
    out.write_manifest(
        cli.command.name(),
        &output::hash_config(&canonical),
        seed,
        started.elapsed().as_secs_f64(),
    )?;
    Ok(passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.workers > 0 {
        // worker count must not affect results, only wall clock
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.workers)
            .build_global();
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            if cli.expect_pass {
                eprintln!("error: experiment: pass criterion not met");
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(CliError::Experiment(msg)) => {
            eprintln!("error: experiment: {msg}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
