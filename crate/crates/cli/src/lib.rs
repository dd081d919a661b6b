//! Command-line harness around the control-optimization library: run single
//! simulations, optimize controls over a list of harmonic counts, and export
//! sampled control signals, all from one strict TOML config.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub mod commands;
pub mod config;
pub mod manifest;

use config::ExperimentConfig;

#[derive(Debug, Error)]
pub enum CliError {
    /// Problems with the configuration or other inputs; exit code 1.
    #[error("{0}")]
    Config(String),
    /// Failures while running or writing results; exit code 2.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "fourier-control",
    about = "Fourier-series control optimization for the stick-slip capsule drive",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Overrides shared by every verb.
#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Path to the experiment config (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides [optimizer] seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides [output] dir.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Overrides [optimizer] k_list (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub k_list: Option<Vec<usize>>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one control and write trajectory, events and summary.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Optimize the control for each harmonic count in k_list.
    Optimize {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Sample a control over one period into a CSV.
    ExportControl {
        #[command(flatten)]
        common: CommonArgs,
        /// Read the control from an optimization manifest instead of the
        /// config's [control_spec].
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Number of samples over one period (default: [output] grid_points).
        #[arg(long)]
        points: Option<usize>,
    },
}

fn load_config(common: &CommonArgs) -> Result<ExperimentConfig, CliError> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.optimizer.seed = seed;
    }
    if let Some(dir) = &common.out_dir {
        config.output.dir = dir.clone();
    }
    if let Some(k_list) = &common.k_list {
        config.optimizer.k_list = k_list.clone();
    }
    config.validate()?;
    Ok(config)
}

/// Dispatches a parsed command line; the caller turns errors into exit codes.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { common } => {
            let config = load_config(&common)?;
            commands::cmd_simulate(&config)
        }
        Command::Optimize { common } => {
            let config = load_config(&common)?;
            commands::cmd_optimize(&config)
        }
        Command::ExportControl {
            common,
            manifest,
            points,
        } => {
            let config = load_config(&common)?;
            commands::cmd_export_control(&config, manifest.as_deref(), points)
        }
    }
}
