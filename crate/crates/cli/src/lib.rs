//! Command-line driver for the super-Brownian motion experiments.
//!
//! Each subcommand reads an [`ExperimentConfig`], runs one analysis and
//! writes JSON and CSV results stamped with the config hash and seed.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::Outcome;
pub use config::{ExperimentConfig, ReportFormat};
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "sbmlab", version, about = "Super-Brownian motion local-time experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML config file; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed (overrides the file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub replicas: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Quadrature checks of the analytic kernel bounds.
    Bounds,
    /// Particle-system moments against the exact formulas.
    Moments,
    /// Tanaka decomposition per replica with residual and isometry summary.
    Tanaka {
        #[arg(long, value_parser = clap::value_parser!(u8).range(2..=3))]
        dim: Option<u8>,
    },
    /// Fluctuations of the 3-d local time near the pole.
    Theorem1,
    /// L1-boundedness of the centered 2-d local time.
    Theorem2,
    /// Raw trajectory summaries.
    Simulate,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Bounds => "bounds",
            Command::Moments => "moments",
            Command::Tanaka { .. } => "tanaka",
            Command::Theorem1 => "theorem1",
            Command::Theorem2 => "theorem2",
            Command::Simulate => "simulate",
        }
    }
}

/// Loads the config file (or defaults) and applies command-line overrides.
pub fn load_config(o: &Overrides) -> CliResult<ExperimentConfig> {
    let mut c = match &o.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = o.seed {
        c.seed = s;
    }
    if let Some(r) = o.replicas {
        c.replicas = r;
    }
    if let Some(out) = &o.out {
        c.out = out.clone();
    }
    if let Some(t) = o.threads {
        c.threads = t;
    }
    Ok(c)
}

pub fn execute(command: Command, config: &ExperimentConfig) -> CliResult<Outcome> {
    match command {
        Command::Bounds => commands::bounds(config),
        Command::Moments => commands::moments(config),
        Command::Tanaka { dim } => match dim {
            Some(d) => commands::tanaka(&ExperimentConfig {
                dim: d as usize,
                ..config.clone()
            }),
            None => commands::tanaka(config),
        },
        Command::Theorem1 => commands::theorem1(config),
        Command::Theorem2 => commands::theorem2(config),
        Command::Simulate => commands::simulate(config),
    }
}

pub fn run(cli: &Cli) -> CliResult<Outcome> {
    let config = load_config(&cli.overrides)?;
    execute(cli.command, &config)
}
