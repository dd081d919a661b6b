//! Event-driven simulation of the dimensionless pendulum capsule drive.
//!
//! The capsule sits on dry ground and carries a torque-driven pendulum with
//! a torsional spring and damper. Pendulum motion modulates both the
//! horizontal inertia force and the normal load, so the capsule alternates
//! between *stick* (static friction holds, capsule velocity is exactly
//! zero) and *slip* (kinetic friction `f_z = mu r_y sgn z'`). In
//! dimensionless form the coupled dynamics are
//!
//! ```text
//! [ 1         -cos th ] [th''] = [ sin th - rho th - nu th' + u1 ]
//! [ -cos th   gam + 1 ] [z'' ]   [ -th'^2 sin th - f_z           ]
//!
//! r_y = (gam + 1) - th'' sin th - th'^2 cos th      (normal load)
//! r_z = th'' cos th - th'^2 sin th                  (horizontal drive)
//! ```
//!
//! During slip the friction force depends on the normal load, which itself
//! depends on the pendulum acceleration; substituting `f_z = mu s r_y`
//! into the second row closes that loop as a 2x2 linear system, solved in
//! [`slip_accelerations`]. Stick-to-slip breakaway happens when
//! `|r_z| >= mu r_y`, and a slipping capsule re-sticks (or reverses) when
//! `z'` returns to zero. Both transitions are localized by bisection.

use std::io::{self, Write};

use thiserror::Error;

use crate::control::FourierSeriesControl;
use crate::export::format_float;
use crate::ode::{EventSpec, IntegratorSettings, OdeError, Rk45, TriggerSense};

/// Number of evenly spaced output samples over the simulation window
/// (event samples are recorded on top of these).
pub const OUTPUT_GRID_POINTS: usize = 2000;

/// Abort threshold for runaway chattering: more phase transitions than this
/// in one run means the model left its regime of validity.
pub const MAX_EVENTS: usize = 1_000_000;

/// Determinant floor for the slip-phase 2x2 inertia system.
const SINGULARITY_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum PlantError {
    #[error("contact loss: normal load became non-positive{}", tau.map(|t| format!(" at tau = {t:.6}")).unwrap_or_default())]
    ContactLoss { tau: Option<f64> },
    #[error("slip inertia system is singular (determinant {det:.3e})")]
    SingularInertia { det: f64 },
    #[error("invalid plant parameters: {0}")]
    InvalidParams(String),
    #[error("more than {limit} phase transitions; aborting a likely chattering run")]
    ChatterLimit { limit: usize },
    #[error(transparent)]
    Ode(#[from] OdeError),
}

/// Dimensionless plant constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapsuleParams {
    /// Coulomb friction coefficient between capsule and ground.
    pub mu: f64,
    /// Torsional spring stiffness ratio.
    pub rho: f64,
    /// Torsional damping ratio.
    pub nu: f64,
    /// Capsule-to-pendulum mass ratio.
    pub gamma: f64,
}

impl Default for CapsuleParams {
    /// Reference parameter set used throughout the test experiments.
    fn default() -> Self {
        Self {
            mu: 0.3,
            rho: 2.5,
            nu: 1.0,
            gamma: 10.0,
        }
    }
}

impl CapsuleParams {
    pub fn new(mu: f64, rho: f64, nu: f64, gamma: f64) -> Result<Self, PlantError> {
        let params = Self { mu, rho, nu, gamma };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        for (name, v) in [
            ("mu", self.mu),
            ("rho", self.rho),
            ("nu", self.nu),
            ("gamma", self.gamma),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(PlantError::InvalidParams(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        // Worst-case slip determinant over all pendulum angles:
        // gamma + 1 - max(cos^2 th + mu sin th cos th).
        let det_min = self.gamma + 1.0 - 0.5 * (1.0 + (1.0 + self.mu * self.mu).sqrt());
        if det_min <= SINGULARITY_TOL {
            return Err(PlantError::InvalidParams(format!(
                "slip inertia system can become singular (worst-case determinant {det_min:.3e})"
            )));
        }
        Ok(())
    }
}

/// Direction of capsule sliding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlipDirection {
    Positive,
    Negative,
}

impl SlipDirection {
    pub fn sign(self) -> f64 {
        match self {
            SlipDirection::Positive => 1.0,
            SlipDirection::Negative => -1.0,
        }
    }

    pub fn from_sign(x: f64) -> Option<Self> {
        if x > 0.0 {
            Some(SlipDirection::Positive)
        } else if x < 0.0 {
            Some(SlipDirection::Negative)
        } else {
            None
        }
    }
}

/// Which friction regime the capsule is in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotionPhase {
    Stick,
    Slip(SlipDirection),
}

impl MotionPhase {
    pub fn label(&self) -> &'static str {
        match self {
            MotionPhase::Stick => "stick",
            MotionPhase::Slip(SlipDirection::Positive) => "slip+",
            MotionPhase::Slip(SlipDirection::Negative) => "slip-",
        }
    }
}

/// Ground-contact force set at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactForces {
    /// Normal load.
    pub r_y: f64,
    /// Resultant horizontal force from pendulum motion.
    pub r_z: f64,
    /// Friction force actually transmitted.
    pub f_z: f64,
}

/// Full instantaneous state of the capsule system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapsuleState {
    pub tau: f64,
    pub theta: f64,
    pub theta_dot: f64,
    pub z: f64,
    pub z_dot: f64,
    pub phase: MotionPhase,
}

/// Initial conditions for a simulation (the phase is derived, not chosen).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InitialConditions {
    pub theta: f64,
    pub theta_dot: f64,
    pub z: f64,
    pub z_dot: f64,
}

/// One recorded trajectory point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub tau: f64,
    pub theta: f64,
    pub theta_dot: f64,
    pub z: f64,
    pub z_dot: f64,
    pub f_z: f64,
    pub r_y: f64,
    pub phase: MotionPhase,
}

/// Phase transition kinds recorded along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionKind {
    StickToSlip(SlipDirection),
    SlipToStick,
    /// Capsule velocity reached zero but breakaway held immediately;
    /// sliding resumes in the recorded direction.
    SlipReversal(SlipDirection),
}

impl TransitionKind {
    pub fn label(&self) -> &'static str {
        match self {
            TransitionKind::StickToSlip(SlipDirection::Positive) => "stick->slip+",
            TransitionKind::StickToSlip(SlipDirection::Negative) => "stick->slip-",
            TransitionKind::SlipToStick => "slip->stick",
            TransitionKind::SlipReversal(SlipDirection::Positive) => "slip->slip+",
            TransitionKind::SlipReversal(SlipDirection::Negative) => "slip->slip-",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryEvent {
    pub tau: f64,
    pub kind: TransitionKind,
}

/// A completed simulation: samples on the output grid plus all event
/// instants, the transition log and the terminal progression cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    pub events: Vec<TrajectoryEvent>,
    /// `J = -|z(tau_f) - z(tau_0)|`: more negative is farther.
    pub cost_j: f64,
}

impl Trajectory {
    pub fn initial_z(&self) -> f64 {
        self.samples.first().map(|s| s.z).unwrap_or(0.0)
    }

    pub fn final_z(&self) -> f64 {
        self.samples.last().map(|s| s.z).unwrap_or(0.0)
    }

    /// Absolute distance covered between the recorded endpoints.
    pub fn distance(&self) -> f64 {
        (self.final_z() - self.initial_z()).abs()
    }

    /// Number of completed stick -> slip -> stick cycles.
    pub fn stick_slip_cycle_count(&self) -> usize {
        let mut cycles = 0;
        let mut slipping = false;
        for ev in &self.events {
            match ev.kind {
                TransitionKind::StickToSlip(_) => slipping = true,
                TransitionKind::SlipToStick => {
                    if slipping {
                        cycles += 1;
                        slipping = false;
                    }
                }
                TransitionKind::SlipReversal(_) => {}
            }
        }
        cycles
    }

    /// Writes samples as CSV with the header
    /// `tau,theta,theta_dot,z,z_dot,f_z,r_y,phase`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "tau,theta,theta_dot,z,z_dot,f_z,r_y,phase")?;
        for s in &self.samples {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                format_float(s.tau),
                format_float(s.theta),
                format_float(s.theta_dot),
                format_float(s.z),
                format_float(s.z_dot),
                format_float(s.f_z),
                format_float(s.r_y),
                s.phase.label()
            )?;
        }
        Ok(())
    }

    /// Writes the transition log as CSV with the header `tau,kind`.
    pub fn write_events_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "tau,kind")?;
        for ev in &self.events {
            writeln!(w, "{},{}", format_float(ev.tau), ev.kind.label())?;
        }
        Ok(())
    }
}

/// Stick-phase accelerations: with the capsule held (`z'' = 0`) the first
/// dynamics row decouples and friction balances the horizontal drive,
/// `f_z = r_z`.
fn stick_dynamics_raw(theta: f64, theta_dot: f64, u1: f64, p: &CapsuleParams) -> (f64, ContactForces) {
    let (sin_t, cos_t) = theta.sin_cos();
    let theta_ddot = sin_t - p.rho * theta - p.nu * theta_dot + u1;
    let r_z = theta_ddot * cos_t - theta_dot * theta_dot * sin_t;
    let r_y = (p.gamma + 1.0) - theta_ddot * sin_t - theta_dot * theta_dot * cos_t;
    (
        theta_ddot,
        ContactForces {
            r_y,
            r_z,
            f_z: r_z,
        },
    )
}

/// Slip-phase accelerations for a (possibly fractional) friction direction
/// `s`. Substituting `f_z = mu s r_y(theta'')` into the second dynamics row
/// yields the 2x2 linear system
///
/// ```text
/// [ 1                        -cos th ] [th''] = [ b1 ]
/// [ -cos th - mu s sin th    gam + 1 ] [z'' ]   [ b2 ]
/// ```
///
/// with `b1 = sin th - rho th - nu th' + u1` and
/// `b2 = -th'^2 sin th - mu s (gam + 1) + mu s th'^2 cos th`.
fn slip_dynamics_raw(
    theta: f64,
    theta_dot: f64,
    u1: f64,
    p: &CapsuleParams,
    s: f64,
) -> (f64, f64, f64, ContactForces) {
    let (sin_t, cos_t) = theta.sin_cos();
    let td2 = theta_dot * theta_dot;
    let mus = p.mu * s;
    let m22 = p.gamma + 1.0;

    let b1 = sin_t - p.rho * theta - p.nu * theta_dot + u1;
    let b2 = -td2 * sin_t - mus * m22 + mus * td2 * cos_t;

    let a21 = -cos_t - mus * sin_t;
    let det = m22 + cos_t * a21;

    let theta_ddot = (m22 * b1 + cos_t * b2) / det;
    let z_ddot = (b2 - a21 * b1) / det;

    let r_y = m22 - theta_ddot * sin_t - td2 * cos_t;
    let r_z = theta_ddot * cos_t - td2 * sin_t;
    let f_z = mus * r_y;

    #[cfg(debug_assertions)]
    {
        let scale = 1.0 + b1.abs().max(b2.abs());
        let row1 = theta_ddot - cos_t * z_ddot - b1;
        let row2 = -cos_t * theta_ddot + m22 * z_ddot - (-td2 * sin_t - f_z);
        debug_assert!(
            row1.abs() < 1e-10 * scale && row2.abs() < 1e-10 * scale,
            "slip accelerations fail back-substitution: row1 = {row1:.3e}, row2 = {row2:.3e}"
        );
    }

    (theta_ddot, z_ddot, det, ContactForces { r_y, r_z, f_z })
}

/// Accelerations and contact forces while stuck; errors on contact loss.
pub fn stick_accelerations(
    theta: f64,
    theta_dot: f64,
    u1: f64,
    params: &CapsuleParams,
) -> Result<(f64, ContactForces), PlantError> {
    let (theta_ddot, forces) = stick_dynamics_raw(theta, theta_dot, u1, params);
    if forces.r_y <= 0.0 {
        return Err(PlantError::ContactLoss { tau: None });
    }
    Ok((theta_ddot, forces))
}

/// Accelerations and contact forces while slipping in direction `dir`.
/// Returns `(theta_ddot, z_ddot, forces)`.
pub fn slip_accelerations(
    theta: f64,
    theta_dot: f64,
    u1: f64,
    params: &CapsuleParams,
    dir: SlipDirection,
) -> Result<(f64, f64, ContactForces), PlantError> {
    let (theta_ddot, z_ddot, det, forces) =
        slip_dynamics_raw(theta, theta_dot, u1, params, dir.sign());
    if det.abs() < SINGULARITY_TOL {
        return Err(PlantError::SingularInertia { det });
    }
    if forces.r_y <= 0.0 {
        return Err(PlantError::ContactLoss { tau: None });
    }
    Ok((theta_ddot, z_ddot, forces))
}

/// Checks the breakaway condition while stuck: returns the slip direction
/// `sgn(r_z)` when `|r_z| >= mu r_y` (boundary inclusive), `None` while
/// static friction holds.
pub fn stick_break_check(
    theta: f64,
    theta_dot: f64,
    u1: f64,
    params: &CapsuleParams,
) -> Result<Option<SlipDirection>, PlantError> {
    let (_, forces) = stick_accelerations(theta, theta_dot, u1, params)?;
    if forces.r_z.abs() >= params.mu * forces.r_y {
        // r_z = 0 cannot reach here: |r_z| >= mu r_y > 0 requires r_z != 0.
        Ok(SlipDirection::from_sign(forces.r_z))
    } else {
        Ok(None)
    }
}

/// Converts dimensional plant parameters into the dimensionless set plus
/// the scale factors that map dimensionless results back to physical units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimensionalParams {
    /// Capsule mass.
    pub capsule_mass: f64,
    /// Pendulum point mass.
    pub pendulum_mass: f64,
    /// Pendulum length.
    pub pendulum_length: f64,
    /// Torsional spring stiffness.
    pub spring_stiffness: f64,
    /// Torsional damping coefficient.
    pub damping: f64,
    /// Gravitational acceleration.
    pub gravity: f64,
    /// Friction coefficient (already dimensionless).
    pub friction: f64,
}

/// Scale factors produced by [`nondimensionalize`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleFactors {
    /// Pendulum natural frequency `sqrt(g / l)`; dimensionless time is
    /// `tau = Omega t`.
    pub natural_frequency: f64,
    /// Position scale: `z = x / l`.
    pub length: f64,
    /// Torque scale: `u1 = F_theta / (m Omega^2 l^2)`.
    pub torque: f64,
    /// Horizontal force scale: `f_z = F_x / (m Omega^2 l)`.
    pub force: f64,
}

pub fn nondimensionalize(d: &DimensionalParams) -> Result<(CapsuleParams, ScaleFactors), PlantError> {
    for (name, v) in [
        ("capsule_mass", d.capsule_mass),
        ("pendulum_mass", d.pendulum_mass),
        ("pendulum_length", d.pendulum_length),
        ("spring_stiffness", d.spring_stiffness),
        ("damping", d.damping),
        ("gravity", d.gravity),
        ("friction", d.friction),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(PlantError::InvalidParams(format!(
                "{name} must be strictly positive, got {v}"
            )));
        }
    }
    let omega = (d.gravity / d.pendulum_length).sqrt();
    let ml2 = d.pendulum_mass * omega * omega * d.pendulum_length * d.pendulum_length;
    let params = CapsuleParams::new(
        d.friction,
        d.spring_stiffness / ml2,
        d.damping / (d.pendulum_mass * omega * d.pendulum_length * d.pendulum_length),
        d.capsule_mass / d.pendulum_mass,
    )?;
    let scales = ScaleFactors {
        natural_frequency: omega,
        length: d.pendulum_length,
        torque: ml2,
        force: d.pendulum_mass * omega * omega * d.pendulum_length,
    };
    Ok((params, scales))
}

/// State layout used by the integrator: `[theta, theta', z, z']`.
type State = [f64; 4];

fn forces_at(phase: MotionPhase, tau: f64, y: &State, u: &FourierSeriesControl, p: &CapsuleParams) -> ContactForces {
    match phase {
        MotionPhase::Stick => stick_dynamics_raw(y[0], y[1], u.eval(tau), p).1,
        MotionPhase::Slip(dir) => slip_dynamics_raw(y[0], y[1], u.eval(tau), p, dir.sign()).3,
    }
}

/// Simulates the capsule drive under the given control over
/// `[tau0, tau_f]`, recording `OUTPUT_GRID_POINTS` evenly spaced samples
/// plus every localized phase transition.
///
/// Phase logic per accepted trajectory segment:
/// - stick: integrate the pendulum with the capsule frozen until
///   `|r_z| - mu r_y` rises to zero (breakaway, direction `sgn(r_z)`);
/// - slip: integrate the coupled system until `s z'` falls to zero, snap
///   `z'` to exactly zero, then either stick (if static friction holds) or
///   immediately re-slip in the breakaway direction;
/// - contact loss (`r_y <= 0`) anywhere aborts the run.
pub fn simulate(
    ctrl: &FourierSeriesControl,
    params: &CapsuleParams,
    tau0: f64,
    tau_f: f64,
    init: InitialConditions,
    settings: &IntegratorSettings,
) -> Result<Trajectory, PlantError> {
    params.validate()?;
    if !(tau_f > tau0) {
        return Err(PlantError::InvalidParams(format!(
            "time window must satisfy tau_f > tau0, got [{tau0}, {tau_f}]"
        )));
    }

    let mut y: State = [init.theta, init.theta_dot, init.z, init.z_dot];
    let mut tau = tau0;
    let mut phase = initial_phase(&y, ctrl.eval(tau0), params, tau0)?;
    if let MotionPhase::Stick = phase {
        y[3] = 0.0;
    }

    let mut rk: Rk45<4> = Rk45::new(settings.clone())?;
    let mut samples: Vec<TrajectorySample> = Vec::with_capacity(OUTPUT_GRID_POINTS + 64);
    let mut events: Vec<TrajectoryEvent> = Vec::new();

    let record = |samples: &mut Vec<TrajectorySample>, tau: f64, y: &State, phase: MotionPhase| {
        if samples.last().map(|s| s.tau) == Some(tau) {
            return;
        }
        let f = forces_at(phase, tau, y, ctrl, params);
        samples.push(TrajectorySample {
            tau,
            theta: y[0],
            theta_dot: y[1],
            z: y[2],
            z_dot: y[3],
            f_z: f.f_z,
            r_y: f.r_y,
            phase,
        });
    };

    record(&mut samples, tau, &y, phase);

    let dt = (tau_f - tau0) / (OUTPUT_GRID_POINTS - 1) as f64;
    let mut event_count = 0usize;

    for i in 1..OUTPUT_GRID_POINTS {
        let target = if i == OUTPUT_GRID_POINTS - 1 {
            tau_f
        } else {
            tau0 + i as f64 * dt
        };
        loop {
            let outcome = match phase {
                MotionPhase::Stick => {
                    let rhs = |t: f64, s: &State| {
                        let (th_dd, _) = stick_dynamics_raw(s[0], s[1], ctrl.eval(t), params);
                        [s[1], th_dd, 0.0, 0.0]
                    };
                    let contact = |t: f64, s: &State| {
                        stick_dynamics_raw(s[0], s[1], ctrl.eval(t), params).1.r_y
                    };
                    let breakaway = |t: f64, s: &State| {
                        let f = stick_dynamics_raw(s[0], s[1], ctrl.eval(t), params).1;
                        f.r_z.abs() - params.mu * f.r_y
                    };
                    let guards = [
                        EventSpec {
                            guard: &contact,
                            sense: TriggerSense::FallingToNonPositive,
                        },
                        EventSpec {
                            guard: &breakaway,
                            sense: TriggerSense::RisingToNonNegative,
                        },
                    ];
                    rk.integrate_until_event(&rhs, &guards, tau, target, &y)?
                }
                MotionPhase::Slip(dir) => {
                    let s_sign = dir.sign();
                    let rhs = move |t: f64, s: &State| {
                        let (th_dd, z_dd, _, _) =
                            slip_dynamics_raw(s[0], s[1], ctrl.eval(t), params, s_sign);
                        [s[1], th_dd, s[3], z_dd]
                    };
                    let contact = move |t: f64, s: &State| {
                        slip_dynamics_raw(s[0], s[1], ctrl.eval(t), params, s_sign).3.r_y
                    };
                    let stopping = move |_: f64, s: &State| s_sign * s[3];
                    let guards = [
                        EventSpec {
                            guard: &contact,
                            sense: TriggerSense::FallingToNonPositive,
                        },
                        EventSpec {
                            guard: &stopping,
                            sense: TriggerSense::FallingToNonPositive,
                        },
                    ];
                    rk.integrate_until_event(&rhs, &guards, tau, target, &y)?
                }
            };

            tau = outcome.tau;
            y = outcome.state;

            match outcome.event {
                None => {
                    record(&mut samples, tau, &y, phase);
                    break;
                }
                Some(0) => {
                    return Err(PlantError::ContactLoss { tau: Some(tau) });
                }
                Some(_) => {
                    event_count += 1;
                    if event_count > MAX_EVENTS {
                        return Err(PlantError::ChatterLimit { limit: MAX_EVENTS });
                    }
                    let u = ctrl.eval(tau);
                    let kind = match phase {
                        MotionPhase::Stick => {
                            let (_, f) = stick_dynamics_raw(y[0], y[1], u, params);
                            let dir = if f.r_z >= 0.0 {
                                SlipDirection::Positive
                            } else {
                                SlipDirection::Negative
                            };
                            phase = MotionPhase::Slip(dir);
                            TransitionKind::StickToSlip(dir)
                        }
                        MotionPhase::Slip(_) => {
                            y[3] = 0.0;
                            match stick_break_check(y[0], y[1], u, params) {
                                Err(PlantError::ContactLoss { .. }) => {
                                    return Err(PlantError::ContactLoss { tau: Some(tau) });
                                }
                                Err(e) => return Err(e),
                                Ok(None) => {
                                    phase = MotionPhase::Stick;
                                    TransitionKind::SlipToStick
                                }
                                Ok(Some(dir)) => {
                                    phase = MotionPhase::Slip(dir);
                                    TransitionKind::SlipReversal(dir)
                                }
                            }
                        }
                    };
                    events.push(TrajectoryEvent { tau, kind });
                    record(&mut samples, tau, &y, phase);
                    rk.reset_controller();
                }
            }
        }
    }

    let z0 = samples.first().map(|s| s.z).unwrap_or(init.z);
    let z1 = samples.last().map(|s| s.z).unwrap_or(init.z);
    Ok(Trajectory {
        samples,
        events,
        cost_j: -(z1 - z0).abs(),
    })
}

fn initial_phase(
    y: &State,
    u0: f64,
    params: &CapsuleParams,
    tau0: f64,
) -> Result<MotionPhase, PlantError> {
    if let Some(dir) = SlipDirection::from_sign(y[3]) {
        return Ok(MotionPhase::Slip(dir));
    }
    match stick_break_check(y[0], y[1], u0, params) {
        Ok(None) => Ok(MotionPhase::Stick),
        Ok(Some(dir)) => Ok(MotionPhase::Slip(dir)),
        Err(PlantError::ContactLoss { .. }) => Err(PlantError::ContactLoss { tau: Some(tau0) }),
        Err(e) => Err(e),
    }
}

/// Fixed-step reference simulation with regularized friction.
///
/// Replaces the set-valued friction law by the smooth approximation
/// `f_z = mu r_y tanh(z' / velocity_eps)` and integrates the resulting
/// smooth ODE with classic fixed-step RK4. The accelerations are obtained
/// by solving the full 3-unknown linear system in `(theta'', z'', r_y)`
/// directly, an algebra route independent of the event-driven simulator.
/// Returns the final `[theta, theta', z, z']`.
pub fn simulate_regularized(
    ctrl: &FourierSeriesControl,
    params: &CapsuleParams,
    tau0: f64,
    tau_f: f64,
    init: InitialConditions,
    dt: f64,
    velocity_eps: f64,
) -> Result<State, PlantError> {
    params.validate()?;
    if !(tau_f > tau0 && dt > 0.0 && velocity_eps > 0.0) {
        return Err(PlantError::InvalidParams(
            "window, dt and velocity_eps must be positive".into(),
        ));
    }

    let rhs = |tau: f64, y: &State| -> State {
        let (theta, theta_dot, _, z_dot) = (y[0], y[1], y[2], y[3]);
        let (sin_t, cos_t) = theta.sin_cos();
        let td2 = theta_dot * theta_dot;
        let t_fric = params.mu * (z_dot / velocity_eps).tanh();
        // Unknowns x = [theta'', z'', r_y]:
        //   theta'' - cos th z''             = b1
        //   -cos th theta'' + (gam+1) z'' + t_fric r_y = -th'^2 sin th
        //   sin th theta''             + r_y = (gam+1) - th'^2 cos th
        let b1 = sin_t - params.rho * theta - params.nu * theta_dot + ctrl.eval(tau);
        let b2 = -td2 * sin_t;
        let b3 = (params.gamma + 1.0) - td2 * cos_t;
        let m = [
            [1.0, -cos_t, 0.0],
            [-cos_t, params.gamma + 1.0, t_fric],
            [sin_t, 0.0, 1.0],
        ];
        let x = solve3(&m, &[b1, b2, b3]);
        [theta_dot, x[0], z_dot, x[1]]
    };

    let steps = ((tau_f - tau0) / dt).round().max(1.0) as usize;
    let h = (tau_f - tau0) / steps as f64;
    let mut y: State = [init.theta, init.theta_dot, init.z, init.z_dot];
    let mut tau = tau0;
    for _ in 0..steps {
        let k1 = rhs(tau, &y);
        let k2 = rhs(tau + 0.5 * h, &add_scaled(&y, &k1, 0.5 * h));
        let k3 = rhs(tau + 0.5 * h, &add_scaled(&y, &k2, 0.5 * h));
        let k4 = rhs(tau + h, &add_scaled(&y, &k3, h));
        for i in 0..4 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        tau += h;
    }
    Ok(y)
}

fn add_scaled(y: &State, k: &State, f: f64) -> State {
    [
        y[0] + f * k[0],
        y[1] + f * k[1],
        y[2] + f * k[2],
        y[3] + f * k[3],
    ]
}

/// Cramer's rule for a 3x3 system.
fn solve3(m: &[[f64; 3]; 3], b: &[f64; 3]) -> [f64; 3] {
    let det = |a: &[[f64; 3]; 3]| {
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    };
    let d = det(m);
    let mut out = [0.0; 3];
    for (col, slot) in out.iter_mut().enumerate() {
        let mut mc = *m;
        for row in 0..3 {
            mc[row][col] = b[row];
        }
        *slot = det(&mc) / d;
    }
    out
}
