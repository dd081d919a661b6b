//! Experiment configuration: a strict key-value TOML schema with defaults
//! matching the reference experiment. Unknown keys are errors, so a config
//! file always means exactly what it says.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use fourier_control::{
    CapsuleParams, ControlBounds, ControlSpec, FourierSeriesControl, InitialConditions,
    IntegratorSettings, OmegaMode, SpanParams, SphericalDirection,
};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub plant: PlantSection,
    pub control: ControlSection,
    pub window: WindowSection,
    pub initial: InitialSection,
    pub integrator: IntegratorSection,
    pub optimizer: OptimizerSection,
    pub output: OutputSection,
    /// Control source for `simulate` / `export-control`: a parametrized
    /// spec (angles, span fractions, frequency, bounds)...
    #[serde(skip_serializing_if = "Option::is_none")]
    pub control_spec: Option<ControlSpecSection>,
    /// ...or explicit Fourier coefficients.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fourier: Option<FourierSection>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            plant: PlantSection::default(),
            control: ControlSection::default(),
            window: WindowSection::default(),
            initial: InitialSection::default(),
            integrator: IntegratorSection::default(),
            optimizer: OptimizerSection::default(),
            output: OutputSection::default(),
            control_spec: None,
            fourier: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PlantSection {
    pub mu: f64,
    pub rho: f64,
    pub nu: f64,
    pub gamma: f64,
}

impl Default for PlantSection {
    fn default() -> Self {
        Self {
            mu: 0.3,
            rho: 2.5,
            nu: 1.0,
            gamma: 10.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ControlSection {
    /// Lower control bound m.
    pub m: f64,
    /// Upper control bound M.
    #[serde(rename = "M")]
    pub upper: f64,
}

impl Default for ControlSection {
    fn default() -> Self {
        Self { m: -4.0, upper: 4.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct WindowSection {
    pub tau0: f64,
    pub tau_f: f64,
}

impl Default for WindowSection {
    fn default() -> Self {
        Self {
            tau0: 0.0,
            tau_f: 100.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct InitialSection {
    pub theta: f64,
    pub theta_dot: f64,
    pub z: f64,
    pub z_dot: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorSection {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub h_init: f64,
    pub h_min: f64,
    /// Step ceiling; omitted means one tenth of the window length.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_max: Option<f64>,
    pub event_time_tol: f64,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        Self {
            abs_tol: 1e-9,
            rel_tol: 1e-12,
            h_init: 1e-3,
            h_min: 1e-14,
            h_max: None,
            event_time_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum OmegaModeSetting {
    /// omega pinned to 2 pi / (tau_f - tau0).
    Fixed,
    /// omega searched in [2 pi / (tau_f - tau0), omega_upper].
    Free,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub k_list: Vec<usize>,
    pub omega: OmegaModeSetting,
    pub omega_upper: f64,
    /// Population size; omitted means 15 per search dimension.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub population: Option<usize>,
    pub mutation: [f64; 2],
    pub crossover: f64,
    pub max_generations: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        Self {
            k_list: vec![1],
            omega: OmegaModeSetting::Free,
            omega_upper: 10.0,
            population: None,
            mutation: [0.5, 1.0],
            crossover: 0.7,
            max_generations: 1000,
            tol: 0.01,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Grid size for `export-control` sampling.
    pub grid_points: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            grid_points: 2000,
        }
    }
}

/// The flat control-spec record `{k, phi[..], p, q, omega, m, M}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ControlSpecSection {
    pub k: usize,
    pub phi: Vec<f64>,
    pub p: f64,
    pub q: f64,
    pub omega: f64,
    pub m: f64,
    #[serde(rename = "M")]
    pub upper: f64,
}

/// Explicit Fourier coefficients `{a0, a[..], b[..], omega}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FourierSection {
    pub a0: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub omega: f64,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let config: ExperimentConfig = toml::from_str(&text).map_err(|e| {
            CliError::Config(format!("config {}: {e}", path.display()))
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.window.tau_f > self.window.tau0) {
            return Err(CliError::Config(format!(
                "[window] needs tau_f > tau0, got [{}, {}]",
                self.window.tau0, self.window.tau_f
            )));
        }
        if !(self.control.m < self.control.upper) {
            return Err(CliError::Config(format!(
                "[control] needs m < M, got [{}, {}]",
                self.control.m, self.control.upper
            )));
        }
        if self.output.grid_points == 0 {
            return Err(CliError::Config(
                "[output] grid_points must be at least 1".into(),
            ));
        }
        if let Some(spec) = &self.control_spec {
            if spec.phi.len() != 2 * spec.k - 1 || spec.k == 0 {
                return Err(CliError::Config(format!(
                    "[control_spec] needs 2k-1 = {} angles for k = {}, got {}",
                    2 * spec.k - 1,
                    spec.k,
                    spec.phi.len()
                )));
            }
        }
        if let Some(f) = &self.fourier {
            if f.a.len() != f.b.len() || f.a.is_empty() {
                return Err(CliError::Config(format!(
                    "[fourier] needs equally many (and at least one) a and b coefficients, got {} and {}",
                    f.a.len(),
                    f.b.len()
                )));
            }
        }
        self.capsule_params()?;
        Ok(())
    }

    /// SHA-256 of the resolved configuration (after command-line
    /// overrides), so outputs can be traced to the exact settings.
    pub fn digest(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        let hash = Sha256::digest(canonical.as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn capsule_params(&self) -> Result<CapsuleParams, CliError> {
        CapsuleParams::new(
            self.plant.mu,
            self.plant.rho,
            self.plant.nu,
            self.plant.gamma,
        )
        .map_err(|e| CliError::Config(format!("[plant] {e}")))
    }

    pub fn control_bounds(&self) -> Result<ControlBounds, CliError> {
        ControlBounds::new(self.control.m, self.control.upper)
            .map_err(|e| CliError::Config(format!("[control] {e}")))
    }

    pub fn initial_conditions(&self) -> InitialConditions {
        InitialConditions {
            theta: self.initial.theta,
            theta_dot: self.initial.theta_dot,
            z: self.initial.z,
            z_dot: self.initial.z_dot,
        }
    }

    pub fn integrator_settings(&self) -> Result<IntegratorSettings, CliError> {
        let settings = IntegratorSettings {
            abs_tol: self.integrator.abs_tol,
            rel_tol: self.integrator.rel_tol,
            h_init: self.integrator.h_init,
            h_min: self.integrator.h_min,
            h_max: self
                .integrator
                .h_max
                .unwrap_or((self.window.tau_f - self.window.tau0) / 10.0),
            event_time_tol: self.integrator.event_time_tol,
            ..IntegratorSettings::default()
        };
        settings
            .validate()
            .map_err(|e| CliError::Config(format!("[integrator] {e}")))?;
        Ok(settings)
    }

    pub fn omega_mode(&self) -> OmegaMode {
        match self.optimizer.omega {
            OmegaModeSetting::Fixed => OmegaMode::Fixed,
            OmegaModeSetting::Free => OmegaMode::Free {
                upper: self.optimizer.omega_upper,
            },
        }
    }
}

impl ControlSpecSection {
    pub fn to_spec(&self) -> Result<ControlSpec, CliError> {
        let direction = SphericalDirection::new(self.phi.clone())
            .map_err(|e| CliError::Config(format!("[control_spec] {e}")))?;
        let span = SpanParams::new(self.p, self.q)
            .map_err(|e| CliError::Config(format!("[control_spec] {e}")))?;
        let bounds = ControlBounds::new(self.m, self.upper)
            .map_err(|e| CliError::Config(format!("[control_spec] {e}")))?;
        ControlSpec::new(direction, span, self.omega, bounds)
            .map_err(|e| CliError::Config(format!("[control_spec] {e}")))
    }

    pub fn from_spec(spec: &ControlSpec) -> Self {
        Self {
            k: spec.harmonic_count(),
            phi: spec.direction.angles().to_vec(),
            p: spec.span.p(),
            q: spec.span.q(),
            omega: spec.omega,
            m: spec.bounds.lower(),
            upper: spec.bounds.upper(),
        }
    }
}

impl FourierSection {
    pub fn to_control(&self) -> Result<FourierSeriesControl, CliError> {
        let harmonics: Vec<(f64, f64)> = self
            .a
            .iter()
            .zip(&self.b)
            .map(|(&a, &b)| (a, b))
            .collect();
        FourierSeriesControl::new(self.a0, harmonics, self.omega)
            .map_err(|e| CliError::Config(format!("[fourier] {e}")))
    }

    pub fn from_control(ctrl: &FourierSeriesControl) -> Self {
        Self {
            a0: ctrl.a0(),
            a: ctrl.harmonics().iter().map(|&(a, _)| a).collect(),
            b: ctrl.harmonics().iter().map(|&(_, b)| b).collect(),
            omega: ctrl.omega(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_experiment() {
        let c = ExperimentConfig::default();
        assert_eq!(
            (c.plant.mu, c.plant.rho, c.plant.nu, c.plant.gamma),
            (0.3, 2.5, 1.0, 10.0)
        );
        assert_eq!((c.control.m, c.control.upper), (-4.0, 4.0));
        assert_eq!((c.window.tau0, c.window.tau_f), (0.0, 100.0));
        assert_eq!(c.initial, InitialSection::default());
        assert_eq!(c.optimizer.omega_upper, 10.0);
        assert_eq!(c.integrator.abs_tol, 1e-9);
        assert_eq!(c.integrator.rel_tol, 1e-12);
        c.validate().unwrap();
    }

    #[test]
    fn empty_config_parses_to_defaults() {
        let c: ExperimentConfig = toml::from_str("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<ExperimentConfig>("[plant]\nmu = 0.3\ntypo_key = 1.0\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("typo_key"), "diagnostic should name the key: {err}");
    }

    #[test]
    fn digest_is_stable_and_sensitive() {
        let a = ExperimentConfig::default();
        let mut b = ExperimentConfig::default();
        assert_eq!(a.digest(), b.digest());
        b.optimizer.seed = 1;
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn spec_section_round_trips() {
        let section = ControlSpecSection {
            k: 2,
            phi: vec![0.3, 1.1, 4.0],
            p: 0.9,
            q: 0.7,
            omega: 1.5,
            m: -4.0,
            upper: 4.0,
        };
        let spec = section.to_spec().unwrap();
        assert_eq!(ControlSpecSection::from_spec(&spec), section);
    }

    #[test]
    fn sub_epsilon_span_fraction_is_a_config_error() {
        let section = ControlSpecSection {
            k: 1,
            phi: vec![0.0],
            p: 1e-12,
            q: 1.0,
            omega: 1.0,
            m: -4.0,
            upper: 4.0,
        };
        let err = section.to_spec().unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
        assert!(err.to_string().contains("span fractions"));
    }
}
