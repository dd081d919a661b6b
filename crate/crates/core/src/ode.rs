//! Adaptive Dormand-Prince 5(4) integration with event localization by bisection.
//!
//! The stepper is generic over the state dimension `N` and any right-hand side
//! `f(tau, y) -> dy/dtau`. Event guards are scalar functions of `(tau, y)`;
//! a guard fires the first time it crosses its trigger threshold, and the
//! crossing time is localized by bisecting the step size and re-integrating
//! the sub-step from the last accepted state. This keeps event times
//! bit-reproducible across runs.

use thiserror::Error;

/// Dormand-Prince stage coefficients (the classic 5(4) pair).
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [
    19372.0 / 6561.0,
    -25360.0 / 2187.0,
    64448.0 / 6561.0,
    -212.0 / 729.0,
];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
/// Fifth-order solution weights (also the seventh stage position).
const B: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
/// Difference between the 5th- and embedded 4th-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const STEP_BETA: f64 = 0.04;
const STEP_EXPO: f64 = 0.2 - STEP_BETA * 0.75;
/// Per-step growth clamp: `h_next / h` stays within this range.
const MIN_STEP_FACTOR: f64 = 0.2;
const MAX_STEP_FACTOR: f64 = 5.0;
const FACOLD_INIT: f64 = 1.0e-4;

#[derive(Debug, Error)]
pub enum OdeError {
    #[error("step size underflow at tau = {tau:.9e}: h = {h:.3e} fell below h_min = {h_min:.3e}")]
    StepUnderflow { tau: f64, h: f64, h_min: f64 },
    #[error("event bisection did not converge within {max_iters} iterations near tau = {tau:.9e}")]
    EventBisectionFailed { tau: f64, max_iters: usize },
    #[error("invalid integrator settings: {0}")]
    InvalidSettings(String),
}

/// Tolerances and step bounds for the adaptive stepper.
#[derive(Debug, Clone)]
pub struct IntegratorSettings {
    /// Per-component absolute tolerance.
    pub abs_tol: f64,
    /// Relative tolerance.
    pub rel_tol: f64,
    /// Initial step size (also used after event restarts).
    pub h_init: f64,
    /// Smallest step the error controller may request before giving up.
    pub h_min: f64,
    /// Largest step ever taken.
    pub h_max: f64,
    /// Bisection window below which an event time counts as localized.
    pub event_time_tol: f64,
    /// Cap on bisection iterations per event.
    pub max_event_iters: usize,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        Self {
            abs_tol: 1e-9,
            rel_tol: 1e-12,
            h_init: 1e-3,
            h_min: 1e-14,
            h_max: f64::INFINITY,
            event_time_tol: 1e-10,
            max_event_iters: 200,
        }
    }
}

impl IntegratorSettings {
    /// Default settings with the step ceiling tied to the integration window,
    /// `h_max = (tau_f - tau0) / 10`.
    pub fn for_window(tau0: f64, tau_f: f64) -> Self {
        Self {
            h_max: (tau_f - tau0) / 10.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), OdeError> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0 && self.event_time_tol > 0.0) {
            return Err(OdeError::InvalidSettings(format!(
                "tolerances must be positive (abs_tol = {}, rel_tol = {}, event_time_tol = {})",
                self.abs_tol, self.rel_tol, self.event_time_tol
            )));
        }
        if !(self.h_min > 0.0 && self.h_min <= self.h_init && self.h_init <= self.h_max) {
            return Err(OdeError::InvalidSettings(format!(
                "step bounds must satisfy 0 < h_min <= h_init <= h_max (got {}, {}, {})",
                self.h_min, self.h_init, self.h_max
            )));
        }
        if self.max_event_iters == 0 {
            return Err(OdeError::InvalidSettings(
                "max_event_iters must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// How a guard function triggers its event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriggerSense {
    /// Fires the first time the guard reaches zero or below, having been positive.
    FallingToNonPositive,
    /// Fires the first time the guard reaches zero or above, having been negative.
    RisingToNonNegative,
}

/// A scalar guard whose threshold crossing terminates integration.
pub struct EventSpec<'a, const N: usize> {
    pub guard: &'a dyn Fn(f64, &[f64; N]) -> f64,
    pub sense: TriggerSense,
}

/// Where an event-aware integration stopped.
#[derive(Debug, Clone)]
pub struct EventOutcome<const N: usize> {
    pub tau: f64,
    pub state: [f64; N],
    /// Index into the event slice, or `None` when `tau_end` was reached.
    pub event: Option<usize>,
}

/// Result of a single error-controlled step attempt.
#[derive(Debug, Clone, Copy)]
pub struct StepOutcome<const N: usize> {
    pub state: [f64; N],
    /// Scaled error norm; the step was accepted iff this is <= 1.
    pub error: f64,
    pub accepted: bool,
    pub h_next: f64,
}

/// Adaptive Dormand-Prince 5(4) stepper.
///
/// Holds the step-size controller state (current step proposal and the
/// previous error for the PI term), so one instance drives one integration
/// at a time. Fresh scratch per instance; instances are independent.
pub struct Rk45<const N: usize> {
    settings: IntegratorSettings,
    h: f64,
    facold: f64,
}

impl<const N: usize> Rk45<N> {
    pub fn new(settings: IntegratorSettings) -> Result<Self, OdeError> {
        settings.validate()?;
        let h = settings.h_init;
        Ok(Self {
            settings,
            h,
            facold: FACOLD_INIT,
        })
    }

    pub fn settings(&self) -> &IntegratorSettings {
        &self.settings
    }

    /// Resets the step-size controller to its initial state. Called after
    /// discontinuous state changes (phase transitions) where the previous
    /// step history no longer predicts anything.
    pub fn reset_controller(&mut self) {
        self.h = self.settings.h_init;
        self.facold = FACOLD_INIT;
    }

    /// One raw Dormand-Prince step of exactly size `h` from `(tau, y)`.
    ///
    /// Returns the 5th-order solution and the scaled error norm of the
    /// embedded 4th-order comparison. No acceptance logic; used both by the
    /// controlled stepper and by event bisection on sub-steps.
    pub fn raw_step<F>(&self, rhs: &F, tau: f64, y: &[f64; N], h: f64) -> ([f64; N], f64)
    where
        F: Fn(f64, &[f64; N]) -> [f64; N],
    {
        let k1 = rhs(tau, y);

        let mut ys = stage_state(y, h, &[(&k1, A2[0])]);
        let k2 = rhs(tau + C[1] * h, &ys);

        ys = stage_state(y, h, &[(&k1, A3[0]), (&k2, A3[1])]);
        let k3 = rhs(tau + C[2] * h, &ys);

        ys = stage_state(y, h, &[(&k1, A4[0]), (&k2, A4[1]), (&k3, A4[2])]);
        let k4 = rhs(tau + C[3] * h, &ys);

        ys = stage_state(
            y,
            h,
            &[(&k1, A5[0]), (&k2, A5[1]), (&k3, A5[2]), (&k4, A5[3])],
        );
        let k5 = rhs(tau + C[4] * h, &ys);

        ys = stage_state(
            y,
            h,
            &[
                (&k1, A6[0]),
                (&k2, A6[1]),
                (&k3, A6[2]),
                (&k4, A6[3]),
                (&k5, A6[4]),
            ],
        );
        let k6 = rhs(tau + C[5] * h, &ys);

        // Fifth-order solution (B[1] = 0, stage 2 drops out).
        let y5 = stage_state(
            y,
            h,
            &[
                (&k1, B[0]),
                (&k3, B[2]),
                (&k4, B[3]),
                (&k5, B[4]),
                (&k6, B[5]),
            ],
        );
        let k7 = rhs(tau + h, &y5);

        let mut err_sq = 0.0;
        for i in 0..N {
            let est = h
                * (E[0] * k1[i]
                    + E[2] * k3[i]
                    + E[3] * k4[i]
                    + E[4] * k5[i]
                    + E[5] * k6[i]
                    + E[6] * k7[i]);
            let scale =
                self.settings.abs_tol + self.settings.rel_tol * y[i].abs().max(y5[i].abs());
            let r = est / scale;
            err_sq += r * r;
        }
        let err = (err_sq / N as f64).sqrt();
        (y5, err)
    }

    /// One error-controlled step attempt of size `h`.
    ///
    /// On acceptance `state` holds the new solution; on rejection it echoes
    /// the input. `h_next` is the controller's proposal either way, clamped
    /// to the per-step growth range [0.2, 5.0].
    pub fn step<F>(&mut self, rhs: &F, tau: f64, y: &[f64; N], h: f64) -> StepOutcome<N>
    where
        F: Fn(f64, &[f64; N]) -> [f64; N],
    {
        let (y5, err) = self.raw_step(rhs, tau, y, h);
        let fac11 = err.powf(STEP_EXPO);
        if err <= 1.0 {
            let fac = (fac11 / self.facold.powf(STEP_BETA) / SAFETY)
                .clamp(1.0 / MAX_STEP_FACTOR, 1.0 / MIN_STEP_FACTOR);
            self.facold = err.max(FACOLD_INIT);
            StepOutcome {
                state: y5,
                error: err,
                accepted: true,
                h_next: (h / fac).min(self.settings.h_max),
            }
        } else {
            let fac = (fac11 / SAFETY).min(1.0 / MIN_STEP_FACTOR);
            StepOutcome {
                state: *y,
                error: err,
                accepted: false,
                h_next: h / fac,
            }
        }
    }

    /// Integrates from `tau0` to `tau_end` with no event guards.
    pub fn integrate<F>(
        &mut self,
        rhs: &F,
        tau0: f64,
        tau_end: f64,
        y0: &[f64; N],
    ) -> Result<[f64; N], OdeError>
    where
        F: Fn(f64, &[f64; N]) -> [f64; N],
    {
        let out = self.integrate_until_event(rhs, &[], tau0, tau_end, y0)?;
        Ok(out.state)
    }

    /// Steps from `tau0` toward `tau_end`, stopping at the earliest guard
    /// crossing if any guard fires.
    ///
    /// After each accepted step every guard is checked for its trigger
    /// condition; a firing guard is localized by bisection on the step size,
    /// re-integrating the sub-step from the step's start state until the
    /// crossing time is bracketed within `event_time_tol`. When several
    /// guards fire inside the same step each is localized and the earliest
    /// wins (ties go to the lowest index).
    pub fn integrate_until_event<F>(
        &mut self,
        rhs: &F,
        events: &[EventSpec<'_, N>],
        tau0: f64,
        tau_end: f64,
        y0: &[f64; N],
    ) -> Result<EventOutcome<N>, OdeError>
    where
        F: Fn(f64, &[f64; N]) -> [f64; N],
    {
        let mut tau = tau0;
        let mut y = *y0;

        // A guard is "armed" once it has been observed strictly on its
        // non-trigger side; an unarmed guard only fires on a strict
        // crossing. This lets integration start exactly on a guard's
        // threshold (the normal situation right after a phase transition)
        // without re-firing at the start point.
        let mut armed: Vec<bool> = events
            .iter()
            .map(|ev| {
                let g = (ev.guard)(tau0, y0);
                match ev.sense {
                    TriggerSense::FallingToNonPositive => g > 0.0,
                    TriggerSense::RisingToNonNegative => g < 0.0,
                }
            })
            .collect();

        while tau < tau_end {
            let mut h = self.h.min(self.settings.h_max);
            let mut hit_end = false;
            if tau + h >= tau_end {
                h = tau_end - tau;
                hit_end = true;
            }
            if h <= 0.0 {
                break;
            }

            let out = self.step(rhs, tau, &y, h);
            if !out.accepted {
                if out.h_next < self.settings.h_min {
                    return Err(OdeError::StepUnderflow {
                        tau,
                        h: out.h_next,
                        h_min: self.settings.h_min,
                    });
                }
                self.h = out.h_next;
                continue;
            }

            let tau_new = if hit_end { tau_end } else { tau + h };

            // Locate the earliest firing guard inside this accepted step.
            let mut earliest: Option<(usize, f64)> = None;
            for (idx, ev) in events.iter().enumerate() {
                let g = (ev.guard)(tau_new, &out.state);
                let fired = match ev.sense {
                    TriggerSense::FallingToNonPositive => {
                        if armed[idx] {
                            g <= 0.0
                        } else {
                            g < 0.0
                        }
                    }
                    TriggerSense::RisingToNonNegative => {
                        if armed[idx] {
                            g >= 0.0
                        } else {
                            g > 0.0
                        }
                    }
                };
                if fired {
                    let h_event = self.bisect_event(rhs, ev, tau, &y, h, !armed[idx])?;
                    match earliest {
                        Some((_, h_best)) if h_event >= h_best => {}
                        _ => earliest = Some((idx, h_event)),
                    }
                } else {
                    match ev.sense {
                        TriggerSense::FallingToNonPositive => armed[idx] |= g > 0.0,
                        TriggerSense::RisingToNonNegative => armed[idx] |= g < 0.0,
                    }
                }
            }

            if let Some((idx, h_event)) = earliest {
                let (y_event, _) = self.raw_step(rhs, tau, &y, h_event);
                self.h = out.h_next;
                return Ok(EventOutcome {
                    tau: tau + h_event,
                    state: y_event,
                    event: Some(idx),
                });
            }

            tau = tau_new;
            y = out.state;
            self.h = out.h_next;
        }

        Ok(EventOutcome {
            tau: tau_end,
            state: y,
            event: None,
        })
    }

    /// Bisects the step size until the guard's crossing time is bracketed
    /// within `event_time_tol`, returning the step size that lands just past
    /// the crossing. `strict` selects the strict trigger predicate used for
    /// guards that start exactly on their threshold.
    fn bisect_event<F>(
        &self,
        rhs: &F,
        event: &EventSpec<'_, N>,
        tau: f64,
        y: &[f64; N],
        h: f64,
        strict: bool,
    ) -> Result<f64, OdeError>
    where
        F: Fn(f64, &[f64; N]) -> [f64; N],
    {
        let fired = |g: f64| match (event.sense, strict) {
            (TriggerSense::FallingToNonPositive, false) => g <= 0.0,
            (TriggerSense::FallingToNonPositive, true) => g < 0.0,
            (TriggerSense::RisingToNonNegative, false) => g >= 0.0,
            (TriggerSense::RisingToNonNegative, true) => g > 0.0,
        };

        let mut lo = 0.0_f64;
        let mut hi = h;
        let mut iters = 0usize;
        while hi - lo > self.settings.event_time_tol {
            iters += 1;
            if iters > self.settings.max_event_iters {
                return Err(OdeError::EventBisectionFailed {
                    tau: tau + hi,
                    max_iters: self.settings.max_event_iters,
                });
            }
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break; // interval narrower than floating-point resolution
            }
            let (y_mid, _) = self.raw_step(rhs, tau, y, mid);
            if fired((event.guard)(tau + mid, &y_mid)) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }
}

fn stage_state<const N: usize>(y: &[f64; N], h: f64, terms: &[(&[f64; N], f64)]) -> [f64; N] {
    let mut out = *y;
    for i in 0..N {
        let mut acc = 0.0;
        for (k, w) in terms {
            acc += w * k[i];
        }
        out[i] += h * acc;
    }
    out
}
