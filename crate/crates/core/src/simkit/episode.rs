//! One closed-loop mission: estimation, control, beamforming and physics per slot.

use nalgebra::{Matrix4, Vector2, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::baselines::{lqg_control, lqr_schedule, noncausal_mpc, MotionBounds, RiccatiSchedule};
use crate::beamforming::{alignment_indicator, sensing_centric_w, FeasibilityInputs};
use crate::config::{InitMode, Scenario};
use crate::dynamics::MotionState;
use crate::error::{Error, Result};
use crate::estimator::{ekf_step, predict_states, EstimatorState};
use crate::mpc::{build_problem, build_stacked, solve, ConstraintParams, SolveStatus};
use crate::rf::{achievable_rate, distance, echo_snr, sample_measurement, steering_vector, Beamformer};

const TARGET_STREAM: u64 = 0;
const MEASUREMENT_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Iscc,
    Lqg,
    Noncausal,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 3] = [Self::Iscc, Self::Lqg, Self::Noncausal];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Iscc => "iscc",
            Self::Lqg => "lqg",
            Self::Noncausal => "noncausal",
        }
    }
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "iscc" => Ok(Self::Iscc),
            "lqg" => Ok(Self::Lqg),
            "noncausal" | "non-causal" => Ok(Self::Noncausal),
            other => Err(Error::InvalidArgument(format!("unknown controller `{other}`"))),
        }
    }
}

/// How the slot's control was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlStatus {
    Optimal,
    SoftFeasible,
    Infeasible,
    /// Linear feedback; no optimization involved.
    Feedback,
}

impl ControlStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Optimal => "optimal",
            Self::SoftFeasible => "soft_feasible",
            Self::Infeasible => "infeasible",
            Self::Feedback => "feedback",
        }
    }
}

impl From<SolveStatus> for ControlStatus {
    fn from(s: SolveStatus) -> Self {
        match s {
            SolveStatus::Optimal => Self::Optimal,
            SolveStatus::SoftFeasible => Self::SoftFeasible,
            SolveStatus::Infeasible => Self::Infeasible,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    /// Slot index, starting at 1.
    pub n: usize,
    pub uav: MotionState,
    pub target: MotionState,
    /// Posterior target estimate.
    pub estimate: Vector4<f64>,
    /// Prediction for slot `n + 1`.
    pub prediction: Vector4<f64>,
    pub control: Vector2<f64>,
    /// `|a^H w|^2` toward the true target.
    pub target_gain: f64,
    pub rate: f64,
    pub echo_snr: f64,
    pub status: ControlStatus,
    /// Whether an EKF update was performed in this slot.
    pub updated: bool,
}

impl SlotRecord {
    pub fn tracking_error(&self) -> Vector4<f64> {
        self.uav.to_vector() - self.target.to_vector()
    }

    pub fn estimation_error(&self) -> Vector4<f64> {
        self.estimate - self.target.to_vector()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub controller: ControllerKind,
    pub seed: u64,
    pub init: InitMode,
    pub rate_threshold: f64,
    pub records: Vec<SlotRecord>,
    /// Diagnostic when the episode stopped early.
    pub aborted: Option<String>,
}

impl EpisodeTrace {
    pub fn control_energy(&self) -> f64 {
        self.records.iter().map(|r| r.control.norm_squared()).sum()
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// True target states for slots `1..=len`.
pub fn target_trajectory(sc: &Scenario, seed: u64, len: usize) -> Vec<MotionState> {
    let mut rng = stream(seed, TARGET_STREAM);
    let mut s = sc.target_init;
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(s);
        let noise = sc.model.sample_noise(&mut rng);
        s = sc.model.step_target(&s, &noise);
    }
    out
}

/// Initial estimate drawn around the true initial target state with covariance `M_init`.
pub fn initial_estimate(sc: &Scenario, seed: u64) -> Vector4<f64> {
    let mut rng = stream(seed, INIT_STREAM);
    let z = Vector4::from_fn(|_, _| StandardNormal.sample(&mut rng));
    let l = sc
        .m_init
        .cholesky()
        .map(|c| c.l())
        .unwrap_or_else(|| Matrix4::from_diagonal(&sc.m_init.diagonal().map(|v| v.max(0.0).sqrt())));
    sc.target_init.to_vector() + l * z
}

/// Beamforming inputs for a UAV at `p_uav` aiming at `p_target`.
pub fn feasibility_inputs(
    sc: &Scenario,
    p_uav: &Vector2<f64>,
    p_target: &Vector2<f64>,
    gamma_d: f64,
) -> Result<FeasibilityInputs> {
    let h = sc.rf.altitude;
    Ok(FeasibilityInputs {
        a_target: steering_vector(p_uav, p_target, h, sc.geometry.tx)?,
        a_gu: steering_vector(p_uav, &sc.p_gu, h, sc.geometry.tx)?,
        d_gu: distance(p_uav, &sc.p_gu, h),
        gamma: sc.gamma,
        eta: sc.eta,
        gamma_d,
        delta: alignment_indicator(p_target, &sc.p_gu),
        rate_threshold: sc.rate_threshold,
    })
}

/// Beam for the next slot: sensing-centric optimum, or MRT toward the GU when the rate cannot be met.
pub fn next_beam(sc: &Scenario, p_uav: &Vector2<f64>, p_target: &Vector2<f64>) -> Result<Beamformer> {
    let inputs = feasibility_inputs(sc, p_uav, p_target, 0.0)?;
    match sensing_centric_w(&inputs) {
        Ok(w) => Ok(w),
        Err(Error::RateInfeasible { .. }) => Ok(Beamformer::mrt(&inputs.a_gu, sc.power)),
        Err(e) => Err(e),
    }
}

enum Policy {
    Iscc,
    Lqg(RiccatiSchedule),
    Noncausal,
}

struct Decision {
    control: Vector2<f64>,
    status: ControlStatus,
}

fn iscc_control(
    sc: &Scenario,
    uav: &MotionState,
    est: &EstimatorState,
    predictions: &[Vector4<f64>],
) -> Result<Decision> {
    let s_uav = uav.to_vector();
    let sm = build_stacked(&(s_uav - est.s_hat), &s_uav, &est.m_hat, &sc.model, sc.horizon, &sc.q, &sc.r)?;
    let params = ConstraintParams {
        gamma_th: sc.gamma_th,
        eta: sc.eta,
        gamma: sc.gamma,
        altitude: sc.rf.altitude,
        p_gu: sc.p_gu,
        deltas: predictions.iter().map(|s| alignment_indicator(&Vector2::new(s[0], s[1]), &sc.p_gu)).collect(),
        a_max: sc.a_max,
        v_max: sc.v_max,
    };
    let problem = build_problem(&sm, &params)?;
    let sol = solve(&problem, &sc.solver)?;
    Ok(Decision { control: sol.first_control(), status: sol.status.into() })
}

/// Runs one mission of `sc.slots` slots.
///
/// Target motion, measurement noise and the initial estimate draw from
/// separate streams of `seed`, so controllers see common random numbers.
pub fn run_episode(sc: &Scenario, controller: ControllerKind, seed: u64) -> Result<EpisodeTrace> {
    let n_slots = sc.slots;
    let targets = target_trajectory(sc, seed, n_slots + sc.horizon);
    let mut meas_rng = stream(seed, MEASUREMENT_STREAM);
    let s_init = initial_estimate(sc, seed);
    let policy = match controller {
        ControllerKind::Iscc => Policy::Iscc,
        ControllerKind::Lqg => Policy::Lqg(lqr_schedule(&sc.model, &sc.q, &sc.r, n_slots + 1)?),
        ControllerKind::Noncausal => Policy::Noncausal,
    };
    let bounds = MotionBounds { a_max: sc.a_max, v_max: sc.v_max };

    let mut trace = EpisodeTrace {
        controller,
        seed,
        init: sc.init,
        rate_threshold: sc.rate_threshold,
        records: Vec::with_capacity(n_slots),
        aborted: None,
    };
    let mut uav = sc.uav_init;
    let mut est = EstimatorState::initial(s_init, sc.m_init, &sc.model);
    // Same closed-form beam as later slots, aimed at the initial estimate.
    let mut w = next_beam(sc, &uav.p, &Vector2::new(s_init[0], s_init[1]))?;

    for n in 1..=n_slots {
        let target = targets[n - 1];
        let mut updated = false;
        if n >= 2 {
            let step = sample_measurement(&uav, &target, &w, &sc.rf, &sc.geometry, &mut meas_rng)
                .and_then(|m| ekf_step(&est, &m, &sc.model, &uav, &w, &sc.rf, &sc.geometry));
            est = match step {
                Ok(next) => {
                    updated = true;
                    next
                }
                // No echo energy toward the target: carry the prior forward.
                Err(Error::InfiniteVariance) => EstimatorState::initial(est.s_check, est.m_check, &sc.model),
                Err(e) => {
                    trace.aborted = Some(format!("slot {n}: estimator failure: {e}"));
                    return Ok(trace);
                }
            };
        }
        let rate = achievable_rate(&uav.p, &sc.p_gu, &w, &sc.rf, &sc.geometry)?;
        let snr = echo_snr(&uav.p, &target.p, &w, &sc.rf, &sc.geometry)?;
        let a_true = steering_vector(&uav.p, &target.p, sc.rf.altitude, sc.geometry.tx)?;
        let predictions = predict_states(&est.s_hat, &sc.model, sc.horizon);

        let decision = match &policy {
            Policy::Iscc => iscc_control(sc, &uav, &est, &predictions),
            Policy::Lqg(schedule) => Ok(Decision {
                control: lqg_control(
                    &(uav.to_vector() - est.s_hat),
                    schedule.gain(n),
                    &uav.v,
                    sc.a_max,
                    sc.v_max,
                    sc.model.dt,
                ),
                status: ControlStatus::Feedback,
            }),
            Policy::Noncausal => {
                let future: Vec<Vector4<f64>> = targets[n..n + sc.horizon].iter().map(|s| s.to_vector()).collect();
                noncausal_mpc(&future, &uav.to_vector(), &sc.model, &sc.q, &sc.r, bounds, &sc.solver)
                    .map(|sol| Decision { control: sol.first_control(), status: sol.status.into() })
            }
        };
        let decision = match decision {
            Ok(d) => d,
            Err(e) => {
                trace.aborted = Some(format!("slot {n}: controller failure: {e}"));
                return Ok(trace);
            }
        };

        trace.records.push(SlotRecord {
            n,
            uav,
            target,
            estimate: est.s_hat,
            prediction: predictions[0],
            control: decision.control,
            target_gain: w.gain_toward(&a_true),
            rate,
            echo_snr: snr,
            status: decision.status,
            updated,
        });

        uav = sc.model.step_uav(&uav, &decision.control);
        let aim = match controller {
            ControllerKind::Noncausal => targets[n].p,
            _ => Vector2::new(predictions[0][0], predictions[0][1]),
        };
        w = next_beam(sc, &uav.p, &aim)?;
    }
    Ok(trace)
}
