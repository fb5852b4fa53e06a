//! Monte Carlo replication and aggregate metrics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::episode::{run_episode, ControlStatus, ControllerKind, EpisodeTrace, SlotRecord};
use crate::config::Scenario;
use crate::error::{Error, Result};

/// Slack on the rate comparison.
pub const RATE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub trials: usize,
    /// `sqrt(mean_m ||e_n||^2)` per slot.
    pub rms_e: Vec<f64>,
    /// Position estimation RMSE per slot.
    pub rmse_p: Vec<f64>,
    /// Velocity estimation RMSE per slot.
    pub rmse_v: Vec<f64>,
    /// Per trial, fraction of all slots meeting the rate threshold.
    pub rate_ok_fraction: Vec<f64>,
    /// Per trial, fraction of optimally solved slots meeting the rate threshold (1 when there are none).
    pub rate_ok_fraction_optimal: Vec<f64>,
    /// Per trial, number of optimally solved slots.
    pub optimal_slots: Vec<usize>,
    pub mean_fraction: f64,
    pub min_fraction: f64,
    /// Per trial, `sum ||u_n||^2`.
    pub control_energy: Vec<f64>,
}

impl TrialMetrics {
    pub fn slots(&self) -> usize {
        self.rms_e.len()
    }

    pub fn min_fraction_optimal(&self) -> f64 {
        self.rate_ok_fraction_optimal.iter().cloned().fold(1.0, f64::min)
    }
}

fn fraction(ok: usize, total: usize) -> f64 {
    if total == 0 {
        1.0
    } else {
        ok as f64 / total as f64
    }
}

/// Aggregates equal-length traces.
pub fn compute_metrics(traces: &[EpisodeTrace]) -> Result<TrialMetrics> {
    let first = traces.first().ok_or_else(|| Error::InvalidArgument("need at least one trace".into()))?;
    let slots = first.records.len();
    if let Some(bad) = traces.iter().find(|t| t.records.len() != slots) {
        return Err(Error::InvalidArgument(format!(
            "trace lengths differ: {} vs {} (seed {})",
            slots,
            bad.records.len(),
            bad.seed
        )));
    }
    let m = traces.len() as f64;
    let mut rms_e = vec![0.0; slots];
    let mut rmse_p = vec![0.0; slots];
    let mut rmse_v = vec![0.0; slots];
    for t in traces {
        for (k, r) in t.records.iter().enumerate() {
            let e = r.tracking_error();
            let x = r.estimation_error();
            rms_e[k] += e.norm_squared();
            rmse_p[k] += x[0] * x[0] + x[1] * x[1];
            rmse_v[k] += x[2] * x[2] + x[3] * x[3];
        }
    }
    for v in [&mut rms_e, &mut rmse_p, &mut rmse_v] {
        v.iter_mut().for_each(|x| *x = (*x / m).sqrt());
    }
    let mut rate_ok_fraction = Vec::with_capacity(traces.len());
    let mut rate_ok_fraction_optimal = Vec::with_capacity(traces.len());
    let mut optimal_slots = Vec::with_capacity(traces.len());
    for t in traces {
        let ok = |r: &SlotRecord| r.rate >= t.rate_threshold - RATE_TOLERANCE;
        let all_ok = t.records.iter().filter(|r| ok(r)).count();
        let optimal: Vec<&SlotRecord> = t.records.iter().filter(|r| r.status == ControlStatus::Optimal).collect();
        let opt_ok = optimal.iter().filter(|r| ok(r)).count();
        rate_ok_fraction.push(fraction(all_ok, slots));
        rate_ok_fraction_optimal.push(fraction(opt_ok, optimal.len()));
        optimal_slots.push(optimal.len());
    }
    let mean_fraction = rate_ok_fraction.iter().sum::<f64>() / m;
    let min_fraction = rate_ok_fraction.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(TrialMetrics {
        trials: traces.len(),
        rms_e,
        rmse_p,
        rmse_v,
        rate_ok_fraction,
        rate_ok_fraction_optimal,
        optimal_slots,
        mean_fraction,
        min_fraction,
        control_energy: traces.iter().map(EpisodeTrace::control_energy).collect(),
    })
}

/// Runs trials with seeds `seed_base + m` in parallel, returned in trial order.
pub fn run_trials(
    sc: &Scenario,
    controller: ControllerKind,
    trials: usize,
    seed_base: u64,
) -> Result<Vec<EpisodeTrace>> {
    if trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    let traces: Vec<EpisodeTrace> = (0..trials as u64)
        .into_par_iter()
        .map(|m| run_episode(sc, controller, seed_base.wrapping_add(m)))
        .collect::<Result<_>>()?;
    if let Some(t) = traces.iter().find(|t| t.aborted.is_some()) {
        return Err(Error::NumericalFailure(format!(
            "{} trial with seed {} aborted: {}",
            controller,
            t.seed,
            t.aborted.as_deref().unwrap_or_default()
        )));
    }
    Ok(traces)
}

pub fn run_monte_carlo(
    sc: &Scenario,
    controller: ControllerKind,
    trials: usize,
    seed_base: u64,
) -> Result<TrialMetrics> {
    compute_metrics(&run_trials(sc, controller, trials, seed_base)?)
}
