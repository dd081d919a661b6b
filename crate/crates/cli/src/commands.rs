//! The three CLI verbs: simulate, optimize, export-control.

use std::fs;
use std::path::{Path, PathBuf};

use fourier_control::export::format_float;
use fourier_control::{
    build_control, optimize, simulate, CapsuleObjective, DEConfig, FourierSeriesControl,
    Trajectory,
};

use crate::config::{ControlSpecSection, ExperimentConfig, FourierSection};
use crate::manifest::{
    BestRecord, BoundsRecord, DeSettingsRecord, HistoryRecord, OptimizationManifest,
    OptimizeStamp, RunStamp, SimulationResult, SimulationSummary, StatsRecord,
};
use crate::CliError;

fn ensure_out_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn write_toml<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = toml::to_string(value)
        .map_err(|e| CliError::Runtime(format!("cannot serialize {}: {e}", path.display())))?;
    write_file(path, text.as_bytes())
}

fn trajectory_files(
    traj: &Trajectory,
    dir: &Path,
    stem: &str,
) -> Result<(PathBuf, PathBuf), CliError> {
    let traj_path = dir.join(format!("{stem}.csv"));
    let events_path = dir.join(format!("{stem}_events.csv"));
    let mut buf = Vec::new();
    traj.write_csv(&mut buf)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    write_file(&traj_path, &buf)?;
    buf.clear();
    traj.write_events_csv(&mut buf)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    write_file(&events_path, &buf)?;
    Ok((traj_path, events_path))
}

/// Resolves the control to simulate from the config: exactly one of
/// `[control_spec]` or `[fourier]`.
fn control_from_config(config: &ExperimentConfig) -> Result<(FourierSeriesControl, &'static str), CliError> {
    match (&config.control_spec, &config.fourier) {
        (Some(spec), None) => {
            let ctrl = build_control(&spec.to_spec()?)
                .map_err(|e| CliError::Config(format!("[control_spec] {e}")))?;
            Ok((ctrl, "control_spec"))
        }
        (None, Some(fourier)) => Ok((fourier.to_control()?, "fourier")),
        (Some(_), Some(_)) => Err(CliError::Config(
            "config defines both [control_spec] and [fourier]; pick one".into(),
        )),
        (None, None) => Err(CliError::Config(
            "simulate needs a [control_spec] or [fourier] section".into(),
        )),
    }
}

/// Runs one simulation and writes `trajectory.csv`, `trajectory_events.csv`
/// and `summary.toml`.
pub fn cmd_simulate(config: &ExperimentConfig) -> Result<(), CliError> {
    let (ctrl, source) = control_from_config(config)?;
    let params = config.capsule_params()?;
    let settings = config.integrator_settings()?;
    let dir = config.output.dir.clone();
    ensure_out_dir(&dir)?;

    let traj = simulate(
        &ctrl,
        &params,
        config.window.tau0,
        config.window.tau_f,
        config.initial_conditions(),
        &settings,
    )
    .map_err(|e| CliError::Runtime(format!("simulation failed: {e}")))?;

    trajectory_files(&traj, &dir, "trajectory")?;

    let summary = SimulationSummary {
        run: RunStamp {
            command: format!("simulate ({source})"),
            config_sha256: config.digest(),
            seed: config.optimizer.seed,
        },
        result: SimulationResult {
            j: traj.cost_j,
            z_initial: traj.initial_z(),
            z_final: traj.final_z(),
            distance: traj.distance(),
            samples: traj.samples.len(),
            events: traj.events.len(),
            stick_slip_cycles: traj.stick_slip_cycle_count(),
        },
    };
    write_toml(&dir.join("summary.toml"), &summary)?;
    println!(
        "simulate: J = {:.6}, z({}) = {:.6}, {} events -> {}",
        traj.cost_j,
        config.window.tau_f,
        traj.final_z(),
        traj.events.len(),
        dir.display()
    );
    Ok(())
}

/// Runs the evolution for every harmonic count in `k_list`, writing per-k
/// manifests, coefficient files and best trajectories, plus the summary
/// `distance_vs_k.csv`.
pub fn cmd_optimize(config: &ExperimentConfig) -> Result<(), CliError> {
    if config.optimizer.k_list.is_empty() {
        return Err(CliError::Config("[optimizer] k_list is empty".into()));
    }
    let params = config.capsule_params()?;
    let bounds_ctrl = config.control_bounds()?;
    let settings = config.integrator_settings()?;
    let dir = config.output.dir.clone();
    ensure_out_dir(&dir)?;
    let digest = config.digest();
    let base_seed = config.optimizer.seed;

    let mut distance_rows = Vec::new();
    for &k in &config.optimizer.k_list {
        if k == 0 {
            return Err(CliError::Config("[optimizer] k_list entries must be >= 1".into()));
        }
        let objective = CapsuleObjective::new(
            params,
            bounds_ctrl,
            config.window.tau0,
            config.window.tau_f,
            config.initial_conditions(),
            settings.clone(),
            k,
            config.omega_mode(),
        );
        let bounds = objective
            .bounds()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let seed = base_seed.wrapping_add(k as u64);
        let de_config = DEConfig {
            population: config.optimizer.population,
            mutation: (config.optimizer.mutation[0], config.optimizer.mutation[1]),
            crossover: config.optimizer.crossover,
            max_generations: config.optimizer.max_generations,
            tol: config.optimizer.tol,
            seed,
        };
        let population = de_config
            .validate(bounds.dim())
            .map_err(|e| CliError::Config(e.to_string()))?;

        let result = optimize(|x| objective.cost(x), &bounds, &de_config)
            .map_err(|e| CliError::Runtime(e.to_string()))?;

        let best_spec = objective
            .decode(&result.best)
            .map_err(|e| CliError::Runtime(format!("best vector does not decode: {e}")))?;
        let best_control = build_control(&best_spec)
            .map_err(|e| CliError::Runtime(format!("best vector does not build: {e}")))?;
        let traj = simulate(
            &best_control,
            &params,
            config.window.tau0,
            config.window.tau_f,
            config.initial_conditions(),
            &settings,
        )
        .map_err(|e| CliError::Runtime(format!("best control does not simulate: {e}")))?;

        let manifest = OptimizationManifest {
            run: OptimizeStamp {
                command: "optimize".into(),
                k,
                seed,
                base_seed,
                config_sha256: digest.clone(),
            },
            de: DeSettingsRecord {
                population,
                mutation: config.optimizer.mutation,
                crossover: config.optimizer.crossover,
                max_generations: config.optimizer.max_generations,
                tol: config.optimizer.tol,
            },
            bounds: BoundsRecord {
                lower: bounds.as_slice().iter().map(|b| b.0).collect(),
                upper: bounds.as_slice().iter().map(|b| b.1).collect(),
            },
            best: BestRecord {
                params: result.best.clone(),
                cost: result.best_cost,
                distance: -result.best_cost,
            },
            best_spec: ControlSpecSection::from_spec(&best_spec),
            best_control: FourierSection::from_control(&best_control),
            stats: StatsRecord {
                generations: result.generations,
                evaluations: result.evaluations,
                non_finite_evals: result.non_finite_evals,
                failed_simulations: objective.failed_evaluations(),
                converged: result.converged,
            },
            history: HistoryRecord {
                best_cost: result.history.clone(),
            },
            config: config.clone(),
        };
        write_toml(&dir.join(format!("manifest_k{k}.toml")), &manifest)?;

        let mut buf = Vec::new();
        best_control
            .write_coefficients_csv(&mut buf)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        write_file(&dir.join(format!("control_k{k}.csv")), &buf)?;

        trajectory_files(&traj, &dir, &format!("trajectory_k{k}"))?;

        println!(
            "optimize k={k}: J = {:.6} (distance {:.6}) after {} generations, {} evaluations",
            result.best_cost, -result.best_cost, result.generations, result.evaluations
        );
        distance_rows.push((k, -result.best_cost));
    }

    let mut csv = String::from("k,distance\n");
    for (k, d) in &distance_rows {
        csv.push_str(&format!("{k},{}\n", format_float(*d)));
    }
    write_file(&dir.join("distance_vs_k.csv"), csv.as_bytes())?;
    Ok(())
}

/// Samples a control over one period onto `control_samples.csv`
/// (`tau,u1`, left-closed grid). The control comes from the config's
/// `[control_spec]` or from an optimization manifest.
pub fn cmd_export_control(
    config: &ExperimentConfig,
    manifest_path: Option<&Path>,
    points_override: Option<usize>,
) -> Result<(), CliError> {
    let ctrl = match manifest_path {
        Some(path) => {
            let manifest = OptimizationManifest::load(path)?;
            build_control(&manifest.best_spec.to_spec()?)
                .map_err(|e| CliError::Config(format!("manifest best_spec: {e}")))?
        }
        None => match (&config.control_spec, &config.fourier) {
            (Some(spec), _) => build_control(&spec.to_spec()?)
                .map_err(|e| CliError::Config(format!("[control_spec] {e}")))?,
            (None, Some(fourier)) => fourier.to_control()?,
            (None, None) => {
                return Err(CliError::Config(
                    "export-control needs a [control_spec]/[fourier] section or --manifest".into(),
                ))
            }
        },
    };

    let points = points_override.unwrap_or(config.output.grid_points);
    if points == 0 {
        return Err(CliError::Config("sample grid must have at least 1 point".into()));
    }
    let dir = config.output.dir.clone();
    ensure_out_dir(&dir)?;

    let period = ctrl.period();
    let mut out = String::from("tau,u1\n");
    for i in 0..points {
        let tau = i as f64 * period / points as f64;
        out.push_str(&format_float(tau));
        out.push(',');
        out.push_str(&format_float(ctrl.eval(tau)));
        out.push('\n');
    }
    let path = dir.join("control_samples.csv");
    write_file(&path, out.as_bytes())?;
    println!(
        "export-control: {points} samples over one period ({} time units) -> {}",
        period,
        path.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_ambiguous_control_source() {
        let mut config = ExperimentConfig::default();
        config.fourier = Some(FourierSection {
            a0: 0.0,
            a: vec![0.0],
            b: vec![4.0],
            omega: 1.0,
        });
        config.control_spec = Some(ControlSpecSection {
            k: 1,
            phi: vec![0.0],
            p: 1.0,
            q: 1.0,
            omega: 1.0,
            m: -4.0,
            upper: 4.0,
        });
        assert!(matches!(
            control_from_config(&config),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn requires_some_control_source() {
        let config = ExperimentConfig::default();
        assert!(matches!(
            control_from_config(&config),
            Err(CliError::Config(_))
        ));
    }
}
