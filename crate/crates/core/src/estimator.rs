//! Extended Kalman filter over the target state.
//!
//! The measurement function stacks range, Doppler and the real/imaginary
//! echo vector. It is linearized at the predicted state with the analytic
//! Jacobian in [`measurement_jacobian`], using the beam that was actually
//! transmitted in the slot.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Matrix4, Vector4};
use num_complex::Complex64;

use crate::dynamics::{MotionState, TransitionModel};
use crate::error::{Error, Result};
use crate::rf::{
    direction_cosines, inner, measurement_covariance, noiseless_measurement, steering_from_cosines, ArrayGeometry,
    Beamformer, Measurement, RfConstants,
};

/// Posterior and one-step prior of the target state.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    /// Posterior estimate for the current slot.
    pub s_hat: Vector4<f64>,
    /// Posterior MSE matrix.
    pub m_hat: Matrix4<f64>,
    /// Prediction for the next slot, `A s_hat`.
    pub s_check: Vector4<f64>,
    /// Predicted MSE for the next slot, `A M_hat A^T + Qs`.
    pub m_check: Matrix4<f64>,
}

impl EstimatorState {
    /// Wraps an externally supplied estimate (first slot) and predicts one step ahead.
    pub fn initial(s_init: Vector4<f64>, m_init: Matrix4<f64>, model: &TransitionModel) -> Self {
        let (s_check, m_check) = predict_one(&s_init, &m_init, model);
        Self { s_hat: s_init, m_hat: symmetrize(&m_init), s_check, m_check }
    }
}

fn symmetrize(m: &Matrix4<f64>) -> Matrix4<f64> {
    (m + m.transpose()) * 0.5
}

fn predict_one(s_hat: &Vector4<f64>, m_hat: &Matrix4<f64>, model: &TransitionModel) -> (Vector4<f64>, Matrix4<f64>) {
    let s = model.a * s_hat;
    let m = model.a * m_hat * model.a.transpose() + model.qs;
    (s, symmetrize(&m))
}

/// `A^i s_hat` for `i = 1..=horizon`.
pub fn predict_states(s_hat: &Vector4<f64>, model: &TransitionModel, horizon: usize) -> Vec<Vector4<f64>> {
    let mut out = Vec::with_capacity(horizon);
    let mut s = *s_hat;
    for _ in 0..horizon {
        s = model.a * s;
        out.push(s);
    }
    out
}

/// Jacobian of the measurement function with respect to the target state,
/// shape `(2 + 2 M_r) x 4`.
pub fn measurement_jacobian(
    s_check: &Vector4<f64>,
    uav: &MotionState,
    w: &Beamformer,
    k: &RfConstants,
    geom: &ArrayGeometry,
) -> Result<DMatrix<f64>> {
    let target = MotionState::from_vector(s_check);
    let (phi, omega, d) = direction_cosines(&uav.p, &target.p, k.altitude)?;
    let dp = uav.p - target.p;
    let dv = uav.v - target.v;
    let h2 = k.altitude * k.altitude;
    let d2 = d * d;
    let d3 = d2 * d;
    let mr = geom.rx_count();
    let mut jac = DMatrix::zeros(2 + 2 * mr, 4);

    // Range row.
    jac[(0, 0)] = -dp.x / d;
    jac[(0, 1)] = -dp.y / d;

    // Doppler row: mu = -kd * dp.dv / d.
    let kd = 2.0 * k.fc / k.c;
    let dot = dp.dot(&dv);
    jac[(1, 0)] = kd * (dv.x * d2 - dot * dp.x) / d3;
    jac[(1, 1)] = kd * (dv.y * d2 - dot * dp.y) / d3;
    jac[(1, 2)] = kd * dp.x / d;
    jac[(1, 3)] = kd * dp.y / d;

    // Echo rows: G sqrt(beta_r) d/dp (psi d^-2), psi = b (a^H w).
    let a = steering_from_cosines(phi, omega, geom.tx);
    let b = steering_from_cosines(phi, omega, geom.rx);
    let ahw = inner(&a, &w.w);
    // Partial derivatives of (Phi, Omega) with respect to the target position.
    let dphi = [-(dp.y * dp.y + h2) / d3, dp.x * dp.y / d3];
    let domega = [dp.x * dp.y / d3, -(dp.x * dp.x + h2) / d3];
    let dd_inv2 = [2.0 * dp.x / (d2 * d2), 2.0 * dp.y / (d2 * d2)];
    let scale = k.gain * k.beta_r.sqrt();
    let j_pi = Complex64::new(0.0, PI);

    for col in 0..2 {
        // (d a)^H w = sum conj(j pi c_m a_m) w_m
        let da_h_w: Complex64 = a
            .iter()
            .zip(w.w.iter())
            .enumerate()
            .map(|(m, (am, wm))| {
                let (ix, iy) = (m / geom.tx.1, m % geom.tx.1);
                let c = ix as f64 * dphi[col] + iy as f64 * domega[col];
                (j_pi * c * am).conj() * wm
            })
            .sum();
        for (m, bm) in b.iter().enumerate() {
            let (ix, iy) = (m / geom.rx.1, m % geom.rx.1);
            let c = ix as f64 * dphi[col] + iy as f64 * domega[col];
            let dpsi = j_pi * c * bm * ahw + bm * da_h_w;
            let psi = bm * ahw;
            let g = (dpsi / d2 + psi * dd_inv2[col]) * scale;
            jac[(2 + m, col)] = g.re;
            jac[(2 + mr + m, col)] = g.im;
        }
    }
    Ok(jac)
}

/// Kalman measurement update with an explicit linearization.
///
/// Returns the posterior `(s_hat, M_hat)`. The innovation covariance is
/// factorized by Cholesky; on failure `1e-9 * trace * I` is added once.
pub fn kalman_update(
    s_check: &Vector4<f64>,
    m_check: &Matrix4<f64>,
    innovation: &DVector<f64>,
    jac: &DMatrix<f64>,
    qm_diag: &DVector<f64>,
) -> Result<(Vector4<f64>, Matrix4<f64>)> {
    let p = DMatrix::from_column_slice(4, 4, m_check.as_slice());
    let mut s = jac * &p * jac.transpose();
    for (i, q) in qm_diag.iter().enumerate() {
        s[(i, i)] += q;
    }
    let chol = match Cholesky::new(s.clone()) {
        Some(c) => c,
        None => {
            let jitter = 1e-9 * s.trace();
            let mut retry = s;
            for i in 0..retry.nrows() {
                retry[(i, i)] += jitter;
            }
            Cholesky::<f64, Dyn>::new(retry)
                .ok_or_else(|| Error::NumericalFailure("innovation covariance is not positive definite".into()))?
        }
    };
    // K^T = S^-1 F M_check
    let gain_t = chol.solve(&(jac * &p));
    let gain = gain_t.transpose();
    let correction = &gain * innovation;
    let s_hat = s_check + Vector4::from_column_slice(correction.as_slice());
    let ikf = DMatrix::<f64>::identity(4, 4) - &gain * jac;
    let post = ikf * p;
    let m_hat = symmetrize(&Matrix4::from_column_slice(post.as_slice()));
    if !s_hat.iter().chain(m_hat.iter()).all(|x| x.is_finite()) {
        return Err(Error::NumericalFailure("non-finite EKF posterior".into()));
    }
    Ok((s_hat, m_hat))
}

/// One EKF cycle: update the prior held in `prior` with measurement `m`, then
/// predict the next prior.
pub fn ekf_step(
    prior: &EstimatorState,
    m: &Measurement,
    model: &TransitionModel,
    uav: &MotionState,
    w: &Beamformer,
    k: &RfConstants,
    geom: &ArrayGeometry,
) -> Result<EstimatorState> {
    let s_check = prior.s_check;
    let predicted = MotionState::from_vector(&s_check);
    let jac = measurement_jacobian(&s_check, uav, w, k, geom)?;
    let f = noiseless_measurement(uav, &predicted, w, k, geom)?;
    let qm = measurement_covariance(w, &uav.p, &predicted.p, k, geom)?;
    let innovation = m.to_vector() - f;
    let (s_hat, m_hat) = kalman_update(&s_check, &prior.m_check, &innovation, &jac, &qm)?;
    let (s_next, m_next) = predict_one(&s_hat, &m_hat, model);
    Ok(EstimatorState { s_hat, m_hat, s_check: s_next, m_check: m_next })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::build_transition;
    use crate::rf::steering_vector;
    use approx::assert_relative_eq;

    fn setup() -> (TransitionModel, RfConstants, ArrayGeometry) {
        (
            build_transition(0.2, [4e-4, 4e-4, 0.01, 0.01]).unwrap(),
            RfConstants::new(1e-6, 30e9, 3e8, 1.0, 1e-11, 1e-11, 1e3, 20.0, 100.0, 50.0).unwrap(),
            ArrayGeometry::new((4, 4), (4, 4)).unwrap(),
        )
    }

    #[test]
    fn prediction_examples() {
        let (model, _, _) = setup();
        assert!(predict_states(&Vector4::zeros(), &model, 5).iter().all(|s| s.norm() == 0.0));
        let traj = predict_states(&Vector4::new(0.0, 400.0, 0.0, -1.0), &model, 5);
        assert_relative_eq!(traj[4], Vector4::new(0.0, 399.0, 0.0, -1.0), epsilon = 1e-12);
        let direct = model.a_power(3) * Vector4::new(1.0, 2.0, 3.0, 4.0);
        let iterated = predict_states(&Vector4::new(1.0, 2.0, 3.0, 4.0), &model, 3)[2];
        assert_relative_eq!(direct, iterated, epsilon = 1e-12);
    }

    #[test]
    fn jacobian_closed_rows() {
        let (_, k, g) = setup();
        let uav = MotionState::new(0.0, 150.0, 1.0, 1.0);
        let tgt = Vector4::new(40.0, 330.0, 1.0, 1.0);
        let a = steering_vector(&uav.p, &tgt.fixed_rows::<2>(0).into(), k.altitude, g.tx).unwrap();
        let w = Beamformer::mrt(&a, 1.0);
        let jac = measurement_jacobian(&tgt, &uav, &w, &k, &g).unwrap();
        let dp = uav.p - tgt.fixed_rows::<2>(0);
        let d = (dp.norm_squared() + 2500.0).sqrt();
        assert_relative_eq!(jac[(0, 0)], -dp.x / d, epsilon = 1e-14);
        assert_relative_eq!(jac[(0, 1)], -dp.y / d, epsilon = 1e-14);
        assert_eq!(jac[(0, 2)], 0.0);
        let kd = 2.0 * k.fc / k.c;
        assert_relative_eq!(jac[(1, 2)], kd * dp.x / d, max_relative = 1e-14);
        assert_relative_eq!(jac[(1, 3)], kd * dp.y / d, max_relative = 1e-14);
        assert!(jac.rows(2, 32).columns(2, 2).iter().all(|x| *x == 0.0));
    }

    #[test]
    fn zero_innovation_keeps_prior() {
        let (model, k, g) = setup();
        let uav = MotionState::new(0.0, 150.0, 0.0, 0.0);
        let s0 = Vector4::new(10.0, 330.0, 1.0, -2.0);
        let state = EstimatorState::initial(s0, model.qs * 10.0, &model);
        let pred = MotionState::from_vector(&state.s_check);
        let a = steering_vector(&uav.p, &pred.p, k.altitude, g.tx).unwrap();
        let w = Beamformer::mrt(&a, 1.0);
        let f = noiseless_measurement(&uav, &pred, &w, &k, &g).unwrap();
        let m = Measurement {
            d_hat: f[0],
            mu_hat: f[1],
            rho: f.rows(2, 32).into_owned(),
            qm_diag: DVector::from_element(34, 1.0),
        };
        let next = ekf_step(&state, &m, &model, &uav, &w, &k, &g).unwrap();
        assert_relative_eq!(next.s_hat, state.s_check, epsilon = 1e-12);
    }

    #[test]
    fn huge_noise_leaves_prior_nearly_unchanged() {
        let s_check = Vector4::new(1.0, 2.0, 0.5, -0.5);
        let m_check = Matrix4::from_diagonal(&Vector4::new(4.0, 4.0, 1.0, 1.0));
        let jac = DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.3, 0.7, 1.0, 0.0]);
        let innov = DVector::from_vec(vec![3.0, -2.0]);
        let (s_hat, _) = kalman_update(&s_check, &m_check, &innov, &jac, &DVector::from_element(2, 1e6)).unwrap();
        assert!((s_hat - s_check).norm() < 1e-3 * innov.norm());
    }

    #[test]
    fn update_matches_textbook_kalman_filter() {
        let s_check = Vector4::new(1.0, 2.0, 0.5, -0.5);
        #[rustfmt::skip]
        let m_check = Matrix4::new(
            4.0, 0.5, 0.2, 0.0,
            0.5, 3.0, 0.0, 0.1,
            0.2, 0.0, 1.0, 0.05,
            0.0, 0.1, 0.05, 0.8,
        );
        let h = DMatrix::from_row_slice(3, 4, &[1.0, 0.2, 0.0, 0.0, -0.4, 1.0, 0.3, 0.0, 0.0, 0.5, 0.0, 2.0]);
        let r = DVector::from_vec(vec![0.5, 2.0, 0.1]);
        let innov = DVector::from_vec(vec![0.7, -1.1, 0.4]);
        let (s_hat, m_hat) = kalman_update(&s_check, &m_check, &innov, &h, &r).unwrap();

        let p = DMatrix::from_column_slice(4, 4, m_check.as_slice());
        let s = &h * &p * h.transpose() + DMatrix::from_diagonal(&r);
        let kg = &p * h.transpose() * s.try_inverse().unwrap();
        let s_ref = DVector::from_column_slice(s_check.as_slice()) + &kg * &innov;
        let m_ref = (DMatrix::identity(4, 4) - &kg * &h) * &p;
        for i in 0..4 {
            assert_relative_eq!(s_hat[i], s_ref[i], epsilon = 1e-10);
            for j in 0..4 {
                assert_relative_eq!(m_hat[(i, j)], m_ref[(i, j)], epsilon = 1e-10);
            }
        }
    }
}
