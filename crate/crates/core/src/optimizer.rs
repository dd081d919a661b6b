//! Differential evolution over box-bounded parameter vectors, plus the
//! capsule-progression objective that ties the control parametrization to
//! the plant.
//!
//! The evolution is rand/1 with binomial crossover and per-generation
//! mutation dithering. Trial vectors for a whole generation are drawn
//! first (so the random stream is independent of evaluation order), then
//! evaluated in parallel, then selected in index order; results are
//! identical for a given seed regardless of thread scheduling.

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::control::{
    build_control, ControlBounds, ControlError, ControlSpec, SpanParams, SphericalDirection,
    SPAN_PARAM_EPS,
};
use crate::ode::IntegratorSettings;
use crate::plant::{simulate, CapsuleParams, InitialConditions};

use std::f64::consts::PI;

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid bounds: {0}")]
    InvalidBounds(String),
}

/// Per-coordinate box constraints, ordered `phi_1..phi_{2K-1}, p, q [, omega]`
/// when used for a control spec.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsVector(Vec<(f64, f64)>);

impl BoundsVector {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self, OptimizerError> {
        if bounds.is_empty() {
            return Err(OptimizerError::InvalidBounds("empty bounds".into()));
        }
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(OptimizerError::InvalidBounds(format!(
                    "coordinate {i}: need finite lo < hi, got ({lo}, {hi})"
                )));
            }
        }
        Ok(Self(bounds))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[(f64, f64)] {
        &self.0
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.0.len()
            && x.iter()
                .zip(&self.0)
                .all(|(&v, &(lo, hi))| (lo..=hi).contains(&v))
    }

    /// Folds each coordinate back into its box by reflection at the
    /// violated boundary, the out-of-bounds repair used on mutant vectors.
    pub fn reflect_into(&self, x: &mut [f64]) {
        for (v, &(lo, hi)) in x.iter_mut().zip(&self.0) {
            let mut val = *v;
            while val < lo || val > hi {
                if val < lo {
                    val = lo + (lo - val);
                } else {
                    val = hi - (val - hi);
                }
            }
            *v = val.clamp(lo, hi);
        }
    }
}

/// Whether the fundamental frequency is a search variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OmegaMode {
    /// `omega = 2 pi / (tau_f - tau0)`, the slowest admissible fundamental.
    Fixed,
    /// `omega` searched in `[2 pi / (tau_f - tau0), upper]`.
    Free { upper: f64 },
}

impl OmegaMode {
    pub fn is_free(&self) -> bool {
        matches!(self, OmegaMode::Free { .. })
    }
}

/// Search-space dimension for a control spec with `k` harmonics:
/// `2K - 1` angles plus `p`, `q`, plus `omega` when it is free.
pub fn spec_dimension(k: usize, mode: OmegaMode) -> usize {
    2 * k - 1 + 2 + usize::from(mode.is_free())
}

/// Box bounds for the control-spec parameter vector. The last angle's
/// interval excludes `2 pi` and the span fractions exclude zero, both by a
/// hair, since the underlying intervals are half-open.
pub fn control_spec_bounds(
    k: usize,
    mode: OmegaMode,
    tau0: f64,
    tau_f: f64,
) -> Result<BoundsVector, OptimizerError> {
    if k == 0 {
        return Err(OptimizerError::InvalidBounds(
            "harmonic count must be at least 1".into(),
        ));
    }
    if !(tau_f > tau0) {
        return Err(OptimizerError::InvalidBounds(format!(
            "time window must satisfy tau_f > tau0, got [{tau0}, {tau_f}]"
        )));
    }
    let mut bounds = Vec::with_capacity(spec_dimension(k, mode));
    for _ in 0..2 * k - 2 {
        bounds.push((0.0, PI));
    }
    bounds.push((0.0, 2.0 * PI - 1e-12));
    bounds.push((SPAN_PARAM_EPS, 1.0));
    bounds.push((SPAN_PARAM_EPS, 1.0));
    let omega_floor = 2.0 * PI / (tau_f - tau0);
    if let OmegaMode::Free { upper } = mode {
        if !(upper > omega_floor) {
            return Err(OptimizerError::InvalidBounds(format!(
                "omega upper bound {upper} must exceed the fundamental floor {omega_floor}"
            )));
        }
        bounds.push((omega_floor, upper));
    }
    BoundsVector::new(bounds)
}

/// Differential-evolution settings.
#[derive(Debug, Clone, PartialEq)]
pub struct DEConfig {
    /// Population size; `None` selects `15 * dimension`.
    pub population: Option<usize>,
    /// Mutation factor range; a fresh factor is drawn per generation.
    pub mutation: (f64, f64),
    /// Binomial crossover probability.
    pub crossover: f64,
    pub max_generations: usize,
    /// Relative convergence tolerance on the population cost spread:
    /// stops when `std(costs) <= tol * |mean(costs)|`.
    pub tol: f64,
    pub seed: u64,
}

impl Default for DEConfig {
    fn default() -> Self {
        Self {
            population: None,
            mutation: (0.5, 1.0),
            crossover: 0.7,
            max_generations: 1000,
            tol: 0.01,
            seed: 0,
        }
    }
}

impl DEConfig {
    pub fn validate(&self, dim: usize) -> Result<usize, OptimizerError> {
        let np = self.population.unwrap_or(15 * dim);
        if np < 4 {
            return Err(OptimizerError::InvalidConfig(format!(
                "population must be at least 4, got {np}"
            )));
        }
        let (lo, hi) = self.mutation;
        if !(lo > 0.0 && lo <= hi && hi <= 2.0) {
            return Err(OptimizerError::InvalidConfig(format!(
                "mutation range must satisfy 0 < lo <= hi <= 2, got ({lo}, {hi})"
            )));
        }
        if !(0.0..=1.0).contains(&self.crossover) {
            return Err(OptimizerError::InvalidConfig(format!(
                "crossover must lie in [0, 1], got {}",
                self.crossover
            )));
        }
        if self.max_generations == 0 {
            return Err(OptimizerError::InvalidConfig(
                "max_generations must be at least 1".into(),
            ));
        }
        if !(self.tol >= 0.0) {
            return Err(OptimizerError::InvalidConfig(format!(
                "tol must be non-negative, got {}",
                self.tol
            )));
        }
        Ok(np)
    }
}

/// Outcome of one optimization run.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub best: Vec<f64>,
    pub best_cost: f64,
    /// Incumbent best cost after each generation (index 0 is the initial
    /// population); non-increasing.
    pub history: Vec<f64>,
    pub evaluations: usize,
    /// Cost evaluations that returned a non-finite value and were replaced
    /// by the +infinity penalty.
    pub non_finite_evals: usize,
    pub generations: usize,
    pub converged: bool,
    pub seed: u64,
}

/// Minimizes `cost` over the box with rand/1/bin differential evolution.
///
/// Non-finite cost values are treated as `+inf` penalties and counted.
/// Identical `(cost, bounds, config)` always produce identical results.
pub fn optimize<F>(
    cost: F,
    bounds: &BoundsVector,
    config: &DEConfig,
) -> Result<OptimizationResult, OptimizerError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let dim = bounds.dim();
    let np = config.validate(dim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let non_finite = AtomicUsize::new(0);
    let evaluate = |pop: &[Vec<f64>]| -> Vec<f64> {
        pop.par_iter()
            .map(|x| {
                let c = cost(x);
                if c.is_finite() {
                    c
                } else {
                    non_finite.fetch_add(1, Ordering::Relaxed);
                    f64::INFINITY
                }
            })
            .collect()
    };

    let mut population: Vec<Vec<f64>> = (0..np)
        .map(|_| {
            bounds
                .as_slice()
                .iter()
                .map(|&(lo, hi)| lo + rng.random::<f64>() * (hi - lo))
                .collect()
        })
        .collect();
    let mut costs = evaluate(&population);
    let mut evaluations = np;

    let mut best_idx = argmin(&costs);
    let mut best = population[best_idx].clone();
    let mut best_cost = costs[best_idx];
    let mut history = vec![best_cost];

    let mut generations = 0;
    let mut converged = false;

    for _ in 0..config.max_generations {
        generations += 1;
        let factor = config.mutation.0 + rng.random::<f64>() * (config.mutation.1 - config.mutation.0);

        let mut trials: Vec<Vec<f64>> = Vec::with_capacity(np);
        for i in 0..np {
            let (r1, r2, r3) = distinct_triplet(&mut rng, np, i);
            let mut trial: Vec<f64> = (0..dim)
                .map(|j| population[r1][j] + factor * (population[r2][j] - population[r3][j]))
                .collect();
            bounds.reflect_into(&mut trial);
            let j_forced = rng.random_range(0..dim);
            for j in 0..dim {
                if j != j_forced && rng.random::<f64>() >= config.crossover {
                    trial[j] = population[i][j];
                }
            }
            trials.push(trial);
        }

        let trial_costs = evaluate(&trials);
        evaluations += np;

        for (i, (trial, trial_cost)) in trials.into_iter().zip(trial_costs).enumerate() {
            if trial_cost <= costs[i] {
                population[i] = trial;
                costs[i] = trial_cost;
            }
        }

        best_idx = argmin(&costs);
        if costs[best_idx] < best_cost {
            best_cost = costs[best_idx];
            best = population[best_idx].clone();
        }
        history.push(best_cost);

        if costs.iter().all(|c| c.is_finite()) {
            let mean = costs.iter().sum::<f64>() / np as f64;
            let var = costs.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / np as f64;
            if var.sqrt() <= config.tol * mean.abs() {
                converged = true;
                break;
            }
        }
    }

    Ok(OptimizationResult {
        best,
        best_cost,
        history,
        evaluations,
        non_finite_evals: non_finite.into_inner(),
        generations,
        converged,
        seed: config.seed,
    })
}

fn argmin(costs: &[f64]) -> usize {
    let mut idx = 0;
    for (i, &c) in costs.iter().enumerate() {
        if c < costs[idx] {
            idx = i;
        }
    }
    idx
}

fn distinct_triplet(rng: &mut ChaCha8Rng, np: usize, exclude: usize) -> (usize, usize, usize) {
    let mut pick = |taken: &[usize]| loop {
        let r = rng.random_range(0..np);
        if r != exclude && !taken.contains(&r) {
            return r;
        }
    };
    let r1 = pick(&[]);
    let r2 = pick(&[r1]);
    let r3 = pick(&[r1, r2]);
    (r1, r2, r3)
}

/// The capsule-progression objective: decodes a parameter vector into a
/// control spec, builds the Fourier control, simulates the plant and
/// returns `J = -|z(tau_f) - z(tau_0)|`.
///
/// Runs that leave the model's validity region (contact loss, integration
/// breakdown) or fail to decode are charged the standing-still cost
/// `J = 0`, never better than any progressing control; such evaluations
/// are counted. Safe to call from many threads at once.
pub struct CapsuleObjective {
    pub plant: CapsuleParams,
    pub control_bounds: ControlBounds,
    pub tau0: f64,
    pub tau_f: f64,
    pub initial: InitialConditions,
    pub settings: IntegratorSettings,
    pub harmonics: usize,
    pub omega_mode: OmegaMode,
    failed: AtomicUsize,
}

impl CapsuleObjective {
    pub fn new(
        plant: CapsuleParams,
        control_bounds: ControlBounds,
        tau0: f64,
        tau_f: f64,
        initial: InitialConditions,
        settings: IntegratorSettings,
        harmonics: usize,
        omega_mode: OmegaMode,
    ) -> Self {
        Self {
            plant,
            control_bounds,
            tau0,
            tau_f,
            initial,
            settings,
            harmonics,
            omega_mode,
            failed: AtomicUsize::new(0),
        }
    }

    pub fn dimension(&self) -> usize {
        spec_dimension(self.harmonics, self.omega_mode)
    }

    pub fn bounds(&self) -> Result<BoundsVector, OptimizerError> {
        control_spec_bounds(self.harmonics, self.omega_mode, self.tau0, self.tau_f)
    }

    /// Decodes an optimizer vector `[phi.., p, q (, omega)]` into a control
    /// spec, wrapping the last angle modulo `2 pi` and clamping the span
    /// fractions into their closed surrogate interval.
    pub fn decode(&self, x: &[f64]) -> Result<ControlSpec, ControlError> {
        let k = self.harmonics;
        let n_angles = 2 * k - 1;
        assert_eq!(
            x.len(),
            self.dimension(),
            "parameter vector has dimension {}, expected {}",
            x.len(),
            self.dimension()
        );
        let mut angles: Vec<f64> = x[..n_angles].to_vec();
        for a in angles.iter_mut().take(n_angles - 1) {
            *a = a.clamp(0.0, PI);
        }
        let last = angles.last_mut().expect("at least one angle");
        *last = last.rem_euclid(2.0 * PI);
        if *last >= 2.0 * PI {
            *last = 0.0;
        }
        let direction = SphericalDirection::new(angles)?;
        let span = SpanParams::clamped(x[n_angles], x[n_angles + 1]);
        let omega = match self.omega_mode {
            OmegaMode::Fixed => 2.0 * PI / (self.tau_f - self.tau0),
            OmegaMode::Free { .. } => x[n_angles + 2],
        };
        ControlSpec::new(direction, span, omega, self.control_bounds)
    }

    /// The scalar cost `J` for one parameter vector.
    pub fn cost(&self, x: &[f64]) -> f64 {
        let spec = match self.decode(x) {
            Ok(s) => s,
            Err(_) => {
                self.failed.fetch_add(1, Ordering::Relaxed);
                return 0.0;
            }
        };
        let ctrl = match build_control(&spec) {
            Ok(c) => c,
            Err(_) => {
                self.failed.fetch_add(1, Ordering::Relaxed);
                return 0.0;
            }
        };
        match simulate(
            &ctrl,
            &self.plant,
            self.tau0,
            self.tau_f,
            self.initial,
            &self.settings,
        ) {
            Ok(traj) => traj.cost_j,
            Err(_) => {
                self.failed.fetch_add(1, Ordering::Relaxed);
                0.0
            }
        }
    }

    /// Number of evaluations charged the failure penalty so far.
    pub fn failed_evaluations(&self) -> usize {
        self.failed.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_converges_under_default_budget() {
        let bounds = BoundsVector::new(vec![(0.0, 1.0); 6]).unwrap();
        let cost = |x: &[f64]| x.iter().map(|v| (v - 0.5) * (v - 0.5)).sum::<f64>();
        let config = DEConfig {
            seed: 7,
            ..DEConfig::default()
        };
        let result = optimize(cost, &bounds, &config).unwrap();
        assert!(
            result.best_cost < 1e-6,
            "best cost {:.3e} after {} generations",
            result.best_cost,
            result.generations
        );
        assert!(bounds.contains(&result.best));
    }

    #[test]
    fn history_is_non_increasing_and_consistent() {
        let bounds = BoundsVector::new(vec![(-2.0, 2.0); 3]).unwrap();
        let cost = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>() + 1.0;
        let config = DEConfig {
            max_generations: 50,
            seed: 3,
            ..DEConfig::default()
        };
        let result = optimize(cost, &bounds, &config).unwrap();
        for w in result.history.windows(2) {
            assert!(w[1] <= w[0]);
        }
        let min_hist = result.history.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(result.best_cost, min_hist);
    }

    #[test]
    fn every_candidate_respects_bounds() {
        use std::sync::Mutex;
        let bounds = BoundsVector::new(vec![(-1.0, 2.0), (0.5, 0.6), (-3.0, -2.0)]).unwrap();
        let seen = Mutex::new(Vec::new());
        let cost = |x: &[f64]| {
            seen.lock().unwrap().push(x.to_vec());
            x.iter().sum::<f64>()
        };
        let config = DEConfig {
            population: Some(12),
            max_generations: 30,
            tol: 0.0,
            seed: 11,
            ..DEConfig::default()
        };
        optimize(cost, &bounds, &config).unwrap();
        let seen = seen.into_inner().unwrap();
        assert!(!seen.is_empty());
        for x in &seen {
            assert!(bounds.contains(x), "candidate out of bounds: {x:?}");
        }
    }

    #[test]
    fn identical_seeds_give_identical_results() {
        let bounds = BoundsVector::new(vec![(-5.0, 5.0); 4]).unwrap();
        let cost = |x: &[f64]| {
            x.iter()
                .map(|v| v * v - 10.0 * (2.0 * PI * v).cos() + 10.0)
                .sum::<f64>()
        };
        let config = DEConfig {
            max_generations: 40,
            seed: 99,
            ..DEConfig::default()
        };
        let a = optimize(cost, &bounds, &config).unwrap();
        let b = optimize(cost, &bounds, &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn non_finite_costs_become_penalties() {
        let bounds = BoundsVector::new(vec![(-1.0, 1.0); 2]).unwrap();
        let cost = |x: &[f64]| {
            if x[0] > 0.0 {
                f64::NAN
            } else {
                x[0] + 2.0
            }
        };
        let config = DEConfig {
            population: Some(10),
            max_generations: 20,
            tol: 0.0,
            seed: 5,
            ..DEConfig::default()
        };
        let result = optimize(cost, &bounds, &config).unwrap();
        assert!(result.non_finite_evals > 0);
        assert!(result.best_cost.is_finite());
        assert!(result.best[0] <= 0.0);
    }

    #[test]
    fn reflection_folds_into_box() {
        let bounds = BoundsVector::new(vec![(0.0, 1.0), (-2.0, -1.0)]).unwrap();
        let mut x = [1.3, -3.7];
        bounds.reflect_into(&mut x);
        assert!((x[0] - 0.7).abs() < 1e-15);
        assert!(bounds.contains(&x));
        // A point already inside is untouched.
        let mut y = [0.25, -1.5];
        bounds.reflect_into(&mut y);
        assert_eq!(y, [0.25, -1.5]);
    }

    #[test]
    fn spec_bounds_have_expected_layout() {
        let b = control_spec_bounds(2, OmegaMode::Free { upper: 10.0 }, 0.0, 100.0).unwrap();
        assert_eq!(b.dim(), spec_dimension(2, OmegaMode::Free { upper: 10.0 }));
        let s = b.as_slice();
        assert_eq!(s[0], (0.0, PI));
        assert_eq!(s[1], (0.0, PI));
        assert_eq!(s[2].0, 0.0);
        assert!(s[2].1 < 2.0 * PI);
        assert_eq!(s[3], (SPAN_PARAM_EPS, 1.0));
        assert_eq!(s[4], (SPAN_PARAM_EPS, 1.0));
        assert_eq!(s[5].0, 2.0 * PI / 100.0);
        assert_eq!(s[5].1, 10.0);

        let fixed = control_spec_bounds(1, OmegaMode::Fixed, 0.0, 100.0).unwrap();
        assert_eq!(fixed.dim(), 3);
    }

    #[test]
    fn decode_wraps_and_clamps() {
        let obj = CapsuleObjective::new(
            CapsuleParams::default(),
            ControlBounds::new(-4.0, 4.0).unwrap(),
            0.0,
            100.0,
            InitialConditions::default(),
            IntegratorSettings::for_window(0.0, 100.0),
            1,
            OmegaMode::Free { upper: 10.0 },
        );
        let spec = obj.decode(&[7.0, -0.5, 2.0, 3.0]).unwrap();
        let phi = spec.direction.angles()[0];
        assert!((0.0..2.0 * PI).contains(&phi));
        assert!((phi - (7.0 - 2.0 * PI)).abs() < 1e-12);
        assert_eq!(spec.span.p(), SPAN_PARAM_EPS);
        assert_eq!(spec.span.q(), 1.0);
        assert_eq!(spec.omega, 3.0);
    }

    #[test]
    fn cost_is_sign_symmetric() {
        // J depends on |z|, and the plant is symmetric under u -> -u, so a
        // spec and its sign-flipped control have equal cost.
        let obj = CapsuleObjective::new(
            CapsuleParams::default(),
            ControlBounds::new(-4.0, 4.0).unwrap(),
            0.0,
            40.0,
            InitialConditions::default(),
            IntegratorSettings::for_window(0.0, 40.0),
            1,
            OmegaMode::Free { upper: 10.0 },
        );
        let x = [PI / 2.0, 1.0, 1.0, 1.1];
        let spec = obj.decode(&x).unwrap();
        let ctrl = build_control(&spec).unwrap();
        let direct = simulate(
            &ctrl,
            &obj.plant,
            obj.tau0,
            obj.tau_f,
            obj.initial,
            &obj.settings,
        )
        .unwrap();
        let flipped = simulate(
            &ctrl.negated(),
            &obj.plant,
            obj.tau0,
            obj.tau_f,
            obj.initial,
            &obj.settings,
        )
        .unwrap();
        assert!((direct.cost_j - flipped.cost_j).abs() < 1e-9);
        assert!((obj.cost(&x) - direct.cost_j).abs() < 1e-15);
    }

    #[test]
    fn vanishing_amplitude_cannot_move_the_capsule() {
        let obj = CapsuleObjective::new(
            CapsuleParams::default(),
            ControlBounds::new(-4.0, 4.0).unwrap(),
            0.0,
            30.0,
            InitialConditions::default(),
            IntegratorSettings::for_window(0.0, 30.0),
            1,
            OmegaMode::Free { upper: 10.0 },
        );
        // q at its epsilon floor with p = 0.5 decodes to a wiggle of width
        // ~4e-9 around zero torque, far inside the static friction cone
        // (mu r_y ~ 3.3): the capsule never moves.
        let j = obj.cost(&[PI / 2.0, 0.5, SPAN_PARAM_EPS, 1.0]);
        assert_eq!(j, 0.0);
    }
}
