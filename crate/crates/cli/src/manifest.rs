//! Machine-readable run records. Everything a run writes carries the
//! resolved config digest and the seed, so any output can be reproduced
//! exactly from its manifest alone.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{ControlSpecSection, ExperimentConfig, FourierSection};
use crate::CliError;

/// Summary record written by `simulate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub run: RunStamp,
    pub result: SimulationResult,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunStamp {
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationResult {
    pub j: f64,
    pub z_initial: f64,
    pub z_final: f64,
    pub distance: f64,
    pub samples: usize,
    pub events: usize,
    pub stick_slip_cycles: usize,
}

/// Per-harmonic-count record written by `optimize`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizationManifest {
    pub run: OptimizeStamp,
    pub de: DeSettingsRecord,
    pub bounds: BoundsRecord,
    pub best: BestRecord,
    pub best_spec: ControlSpecSection,
    pub best_control: FourierSection,
    pub stats: StatsRecord,
    pub history: HistoryRecord,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizeStamp {
    pub command: String,
    pub k: usize,
    /// Seed actually fed to the evolution for this k.
    pub seed: u64,
    /// Seed from the config/CLI; per-k seeds are `base_seed + k`.
    pub base_seed: u64,
    pub config_sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeSettingsRecord {
    pub population: usize,
    pub mutation: [f64; 2],
    pub crossover: f64,
    pub max_generations: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundsRecord {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BestRecord {
    pub params: Vec<f64>,
    pub cost: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatsRecord {
    pub generations: usize,
    pub evaluations: usize,
    pub non_finite_evals: usize,
    pub failed_simulations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistoryRecord {
    /// Incumbent best cost after each generation.
    pub best_cost: Vec<f64>,
}

impl OptimizationManifest {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read manifest {}: {e}", path.display()))
        })?;
        toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("manifest {}: {e}", path.display())))
    }
}
