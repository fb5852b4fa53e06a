//! Closed-form beamformers for the per-slot feasibility checks.
//!
//! Both checks maximize the beam gain toward one steering vector while
//! guaranteeing a minimum gain toward the other, under a total power budget.
//! The optimum lies in the span of the two steering vectors: either plain
//! MRT toward the objective direction (when that already satisfies the other
//! constraint), or a split that gives the constrained direction exactly its
//! required gain and puts the remaining power on the orthogonal complement.

use nalgebra::Vector2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::rf::{inner, Beamformer, CVector};

/// Position tolerance (m) under which the predicted target counts as co-located with the GU.
pub const ALIGNMENT_TOLERANCE: f64 = 1e-6;

/// Margins closer to zero than this are treated as the feasibility boundary.
pub const BOUNDARY_TOLERANCE: f64 = 1e-9;

/// Per-slot data needed by the beamforming closed forms.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityInputs {
    /// Steering vector toward the predicted target.
    pub a_target: CVector,
    /// Steering vector toward the ground user.
    pub a_gu: CVector,
    /// UAV to ground-user distance (m).
    pub d_gu: f64,
    /// `M_t * P_T`
    pub gamma: f64,
    /// `sigma_c^2 (2^R_th - 1) / beta0`
    pub eta: f64,
    /// Required sensing gain `E{d^4} * Gamma_th`.
    pub gamma_d: f64,
    /// 0 when the predicted target sits on the ground user, else 1.
    pub delta: u8,
    /// Rate threshold `R_th` (bps/Hz).
    pub rate_threshold: f64,
}

impl FeasibilityInputs {
    pub fn tx_count(&self) -> usize {
        self.a_target.len()
    }

    /// Transmit power budget `P_T = gamma / M_t`.
    pub fn power(&self) -> f64 {
        self.gamma / self.tx_count() as f64
    }

    /// Beam gain the ground user needs to reach `R_th`, `eta * d_c^2`.
    pub fn rate_gain_required(&self) -> f64 {
        self.eta * self.d_gu * self.d_gu
    }

    /// `cos(theta) = |a_target^H a_gu| / M_t`, clamped to `[0, 1]`.
    pub fn cos_theta(&self) -> f64 {
        cos_between(&self.a_target, &self.a_gu)
    }

    fn validate(&self) -> Result<()> {
        if self.a_target.len() != self.a_gu.len() || self.a_target.is_empty() {
            return Err(Error::InvalidArgument("steering vectors must have equal nonzero length".into()));
        }
        if !(self.gamma > 0.0 && self.eta > 0.0) || self.delta > 1 || self.gamma_d < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "invalid feasibility inputs: gamma={}, eta={}, gamma_d={}, delta={}",
                self.gamma, self.eta, self.gamma_d, self.delta
            )));
        }
        Ok(())
    }
}

fn cos_between(x: &CVector, y: &CVector) -> f64 {
    (inner(x, y).norm() / (x.norm() * y.norm())).clamp(0.0, 1.0)
}

/// `delta_i`: 0 if the predicted target position coincides with the GU.
pub fn alignment_indicator(p_pred: &Vector2<f64>, p_gu: &Vector2<f64>) -> u8 {
    if (p_pred - p_gu).norm() < ALIGNMENT_TOLERANCE {
        0
    } else {
        1
    }
}

/// Optimal value of `max |o^H w|^2` s.t. `|c^H w|^2 >= required`, `||w||^2 <= gamma / M`
/// for unit-modulus `o`, `c` at angle `theta`.
fn constrained_gain(gamma: f64, required: f64, cos_theta: f64) -> f64 {
    if gamma * cos_theta * cos_theta >= required {
        gamma
    } else {
        let sin_theta = (1.0 - cos_theta * cos_theta).max(0.0).sqrt();
        (required.sqrt() * cos_theta + (gamma - required).max(0.0).sqrt() * sin_theta).powi(2)
    }
}

fn unit_phase(z: Complex64) -> Complex64 {
    let n = z.norm();
    if n > 0.0 {
        z / n
    } else {
        Complex64::new(1.0, 0.0)
    }
}

/// Maximizes the gain toward `objective` while giving `constrained` exactly
/// `required` (or more, in the MRT branch).
fn split_beam(objective: &CVector, constrained: &CVector, required: f64, power: f64) -> Beamformer {
    let m_t = objective.len() as f64;
    let gamma = m_t * power;
    let cos_theta = cos_between(objective, constrained);
    if gamma * cos_theta * cos_theta >= required {
        return Beamformer::mrt(objective, power);
    }
    let nu1 = constrained / Complex64::from(constrained.norm());
    let proj = inner(&nu1, objective);
    let resid = objective - &nu1 * proj;
    let resid_norm = resid.norm();
    if resid_norm <= 1e-12 * objective.norm() {
        // Collinear vectors; only reachable at the branch boundary through rounding.
        return Beamformer::mrt(objective, power);
    }
    let nu2 = resid / Complex64::from(resid_norm);
    let kappa1 = unit_phase(proj) * (required / m_t).sqrt();
    let kappa2 = unit_phase(inner(&nu2, objective)) * (power - required / m_t).max(0.0).sqrt();
    Beamformer::new(nu1 * kappa1 + nu2 * kappa2)
}

/// Sensing-centric optimum: maximize the gain toward the predicted target
/// subject to `R >= R_th` and the power budget.
pub fn sensing_centric_w(inputs: &FeasibilityInputs) -> Result<Beamformer> {
    inputs.validate()?;
    let required = inputs.rate_gain_required();
    if required > inputs.gamma {
        return Err(Error::RateInfeasible { required, gamma: inputs.gamma });
    }
    Ok(split_beam(&inputs.a_target, &inputs.a_gu, required, inputs.power()))
}

/// `Gamma*_{n+i}`: the largest sensing gain compatible with the rate constraint.
pub fn gamma_star(inputs: &FeasibilityInputs) -> Result<f64> {
    inputs.validate()?;
    let required = inputs.rate_gain_required();
    if required > inputs.gamma {
        return Err(Error::RateInfeasible { required, gamma: inputs.gamma });
    }
    Ok(constrained_gain(inputs.gamma, required, inputs.cos_theta()))
}

/// `G*_{n+i}`: the largest ground-user gain compatible with the sensing constraint.
pub fn g_star(inputs: &FeasibilityInputs) -> Result<f64> {
    inputs.validate()?;
    if inputs.gamma_d > inputs.gamma {
        return Err(Error::SensingInfeasible { required: inputs.gamma_d, gamma: inputs.gamma });
    }
    Ok(constrained_gain(inputs.gamma, inputs.gamma_d, inputs.cos_theta()))
}

/// Rate (bps/Hz) achieved by ground-user beam gain `gain`.
///
/// Uses `beta0 / sigma_c^2 = (2^R_th - 1) / eta`.
pub fn rate_from_gain(inputs: &FeasibilityInputs, gain: f64) -> f64 {
    let snr_per_gain = (2f64.powf(inputs.rate_threshold) - 1.0) / inputs.eta;
    (1.0 + snr_per_gain * gain / (inputs.d_gu * inputs.d_gu)).log2()
}

/// Communication-centric optimum. Returns the beamformer and the maximum
/// achievable rate `R*_{n+i}`.
pub fn comm_centric_w(inputs: &FeasibilityInputs) -> Result<(Beamformer, f64)> {
    let g = g_star(inputs)?;
    let w = split_beam(&inputs.a_gu, &inputs.a_target, inputs.gamma_d, inputs.power());
    Ok((w, rate_from_gain(inputs, g)))
}

/// `Gamma^l = gamma - delta * eta * d_c^2`.
pub fn gamma_lower(inputs: &FeasibilityInputs) -> f64 {
    inputs.gamma - f64::from(inputs.delta) * inputs.rate_gain_required()
}

/// Outcome of the two per-slot feasibility checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeasibilityFlags {
    pub sensing_feasible: bool,
    pub comm_feasible: bool,
}

/// Runs both feasibility checks on one slot.
///
/// Margins within [`BOUNDARY_TOLERANCE`] (relative to their scale) count as
/// feasible for both checks.
pub fn lemma1_check(inputs: &FeasibilityInputs) -> Result<FeasibilityFlags> {
    inputs.validate()?;
    let sensing_margin = match gamma_star(inputs) {
        Ok(g) => Some(g - inputs.gamma_d),
        Err(Error::RateInfeasible { .. }) => None,
        Err(e) => return Err(e),
    };
    let comm_margin = match g_star(inputs) {
        Ok(g) => Some(rate_from_gain(inputs, g) - inputs.rate_threshold),
        Err(Error::SensingInfeasible { .. }) => None,
        Err(e) => return Err(e),
    };
    let gain_scale = inputs.gamma.max(1.0);
    let rate_scale = inputs.rate_threshold.max(1.0);
    let on_boundary = sensing_margin.is_some_and(|m| m.abs() < BOUNDARY_TOLERANCE * gain_scale)
        || comm_margin.is_some_and(|m| m.abs() < BOUNDARY_TOLERANCE * rate_scale);
    if on_boundary {
        return Ok(FeasibilityFlags { sensing_feasible: true, comm_feasible: true });
    }
    Ok(FeasibilityFlags {
        sensing_feasible: sensing_margin.is_some_and(|m| m >= 0.0),
        comm_feasible: comm_margin.is_some_and(|m| m >= 0.0),
    })
}

/// `min_i (Gamma*_{n+i} - Gamma_{d,i})` over the horizon.
pub fn sensing_margin(slots: &[FeasibilityInputs]) -> Result<f64> {
    slots.iter().map(|s| gamma_star(s).map(|g| g - s.gamma_d)).try_fold(f64::INFINITY, |acc, m| m.map(|m| acc.min(m)))
}

/// `min_i (R*_{n+i} - R_th)` over the horizon.
pub fn rate_margin(slots: &[FeasibilityInputs]) -> Result<f64> {
    slots
        .iter()
        .map(|s| g_star(s).map(|g| rate_from_gain(s, g) - s.rate_threshold))
        .try_fold(f64::INFINITY, |acc, m| m.map(|m| acc.min(m)))
}
