//! `bss`: config-driven experiments on Brownian semistationary processes.
//!
//! Every run reads one TOML config, writes its artifacts into the output
//! directory together with the resolved config and `manifest.txt`, and
//! exits with 0 on success, 2 on a configuration or validation failure and
//! 3 on a numerical failure.

mod commands;
mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bss_core::BssError;
use clap::{Parser, Subcommand};

use crate::commands::Verdict;
use crate::config::ExperimentConfig;
use crate::output::Outputs;

#[derive(Parser)]
#[command(name = "bss", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads. Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Check the model conditions and write the report
    Validate,
    /// Simulate paths of Z and its components on the window
    Simulate,
    /// Covariance of the moving average on the window for a frozen volatility
    Covariance,
    /// Gaussian law of the future increment given the frozen past
    Condlaw,
    /// Approximate targets by the range of the convolution operator
    Rkhs,
    /// Monte Carlo tube probabilities for the configured targets
    Probe,
    /// The stochastic exponential, whose increments stay above -1
    Counterexample,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Simulate => "simulate",
            Command::Covariance => "covariance",
            Command::Condlaw => "condlaw",
            Command::Rkhs => "rkhs",
            Command::Probe => "probe",
            Command::Counterexample => "counterexample",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    /// Malformed or inconsistent config.
    Config(String),
    /// The model failed its conditions.
    Validation(String),
    Core(BssError),
    Io(std::io::Error),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Validation(m) => write!(f, "validation failed: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

fn run(cli: &Cli) -> Result<Verdict, CliError> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot start {n} workers: {e}")))?;
    }
    let Some(path) = &cli.config else {
        return Err(CliError::Config("missing --config <path>".into()));
    };
    let mut cfg = ExperimentConfig::load(path)?;
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = Some(out.clone());
    }
    let base = path.parent().unwrap_or(Path::new("."));
    // The output location is not part of the experiment.
    let out_dir = cfg
        .output_dir
        .take()
        .map(|d| if d.is_relative() && cli.out.is_none() { base.join(d) } else { d })
        .ok_or_else(|| CliError::Config("no output directory: set `output_dir` or pass --out".into()))?;
    let cfg = cfg.resolve(base)?;
    let model_hash = cfg.bss_model()?.hash();

    let mut out = Outputs::create(&out_dir)?;
    let verdict = match cli.command {
        Command::Validate => commands::validate(&cfg, &mut out)?,
        Command::Simulate => commands::simulate(&cfg, cfg.require_seed()?, &mut out)?,
        Command::Covariance => commands::covariance(&cfg, cfg.require_seed()?, &mut out)?,
        Command::Condlaw => commands::condlaw(&cfg, cfg.require_seed()?, &mut out)?,
        Command::Rkhs => commands::rkhs(&cfg, cfg.seed, &mut out)?,
        Command::Probe => commands::probe(&cfg, cfg.require_seed()?, &mut out)?,
        Command::Counterexample => commands::counterexample(&cfg, cfg.require_seed()?, &mut out)?,
    };
    out.finish(cli.command.name(), &cfg, &model_hash)?;
    println!("wrote {}", out_dir.display());
    Ok(verdict)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Verdict::Ok) => ExitCode::SUCCESS,
        Ok(Verdict::Failed(msg)) => {
            eprintln!("bss {}: {msg}", cli.command.name());
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("bss {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code())
        }
    }
}
