//! Integrated sensing, communication and control for UAV target tracking.
//!
//! A UAV carrying a planar array tracks a moving ground target with radar
//! echoes while serving a ground user over the same beam. Each slot runs an
//! extended Kalman filter on the echo, plans accelerations with a convex
//! receding-horizon program that keeps the echo SNR and the user rate above
//! their thresholds, and picks the next beam in closed form.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod beamforming;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod estimator;
pub mod mpc;
pub mod oracle;
pub mod rf;
pub mod simkit;
pub mod verify;

pub use config::{load_config, InitMode, Scenario, ScenarioConfig};
pub use dynamics::{build_transition, ErrorState, MotionState, TransitionModel};
pub use error::{Error, Result};
pub use mpc::{MpcSolution, SolveStatus, SolverOptions};
pub use rf::{ArrayGeometry, Beamformer, RfConstants};
pub use simkit::{run_episode, run_monte_carlo, ControllerKind, EpisodeTrace, TrialMetrics};
