//! Closed-loop simulation, Monte Carlo replication, metrics and output.

mod episode;
mod metrics;
mod report;

pub use episode::{
    feasibility_inputs, initial_estimate, next_beam, run_episode, target_trajectory, ControlStatus, ControllerKind,
    EpisodeTrace, SlotRecord,
};
pub use metrics::{compute_metrics, run_monte_carlo, run_trials, TrialMetrics, RATE_TOLERANCE};
pub use report::{trace_to_string, write_metrics_csv, write_trace_csv, METRICS_COLUMNS, TRACE_COLUMNS};
