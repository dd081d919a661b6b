//! Open-loop control optimization for bounded controls via Fourier-series
//! parametrization, with a stick-slip capsule-drive reference plant.
//!
//! The pieces, bottom to top:
//!
//! - [`ode`]: adaptive Dormand-Prince 5(4) integration with event
//!   localization by bisection, generic over the right-hand side.
//! - [`control`]: the shape/span parametrization that maps a box-bounded
//!   vector of angles and span fractions onto Fourier coefficients whose
//!   evaluated signal is guaranteed to respect its control bounds.
//! - [`plant`]: the dimensionless pendulum capsule drive with Coulomb
//!   friction, simulated phase by phase (stick / slip) with exact event
//!   times, plus a regularized fixed-step reference simulator.
//! - [`optimizer`]: differential evolution over the parameter box and the
//!   capsule-progression objective `J = -|z(tau_f) - z(tau_0)|`.
//!
//! All simulation and evaluation entry points are pure functions of their
//! inputs; anything returning results is deterministic given its seed.

pub mod control;
pub mod export;
pub mod ode;
pub mod optimizer;
pub mod plant;

pub use control::{
    build_control, build_from_amplitudes, estimate_span_numeric, eval_shape_signal,
    normalize_shape, span_from_params, ControlBounds, ControlError, ControlSpec,
    FourierSeriesControl, Span, SpanParams, SphericalDirection, SPAN_PARAM_EPS,
    SPAN_SAMPLE_POINTS,
};
pub use ode::{
    EventOutcome, EventSpec, IntegratorSettings, OdeError, Rk45, StepOutcome, TriggerSense,
};
pub use optimizer::{
    control_spec_bounds, optimize, spec_dimension, BoundsVector, CapsuleObjective, DEConfig,
    OmegaMode, OptimizationResult, OptimizerError,
};
pub use plant::{
    nondimensionalize, simulate, simulate_regularized, stick_accelerations, stick_break_check,
    slip_accelerations, CapsuleParams, CapsuleState, ContactForces, DimensionalParams,
    InitialConditions, MotionPhase, PlantError, ScaleFactors, SlipDirection, Trajectory,
    TrajectoryEvent, TrajectorySample, TransitionKind, MAX_EVENTS, OUTPUT_GRID_POINTS,
};
