//! Benchmark controllers: finite-horizon LQR applied to the estimated error,
//! and a deterministic MPC with oracle knowledge of the future target states.

use std::ops::AddAssign;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4, Vector2, Vector4};

use crate::dynamics::TransitionModel;
use crate::error::{Error, Result};
use crate::mpc::{solve, MpcProblem, MpcSolution, SolverOptions};

/// Backward Riccati sweep.
#[derive(Debug, Clone)]
pub struct RiccatiSchedule {
    /// `P_N, P_{N-1}, ..., P_1`
    pub p: Vec<DMatrix<f64>>,
    /// `K_1, ..., K_{N-1}`
    pub k: Vec<DMatrix<f64>>,
}

impl RiccatiSchedule {
    pub fn horizon(&self) -> usize {
        self.p.len()
    }

    /// `P_k` for `k` in `1..=N`.
    pub fn cost_to_go(&self, k: usize) -> &DMatrix<f64> {
        &self.p[self.p.len() - k]
    }

    /// `K_k` for `k` in `1..N`.
    pub fn gain(&self, k: usize) -> &DMatrix<f64> {
        &self.k[k - 1]
    }
}

/// Gain `(R + B^T P B)^{-1} B^T P A` and the preceding cost-to-go matrix.
pub fn riccati_step(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p_next: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let bt_p = b.transpose() * p_next;
    let s = r + &bt_p * b;
    let gain = s
        .cholesky()
        .ok_or_else(|| Error::NumericalFailure("R + B^T P B is not positive definite".into()))?
        .solve(&(&bt_p * a));
    let at_p = a.transpose() * p_next;
    let p = q + &at_p * a - &at_p * b * &gain;
    let p = (&p + p.transpose()) * 0.5;
    Ok((gain, p))
}

/// Backward recursion from the terminal condition `P_N = Q`.
pub fn riccati_backward(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    horizon: usize,
) -> Result<RiccatiSchedule> {
    let n = a.nrows();
    if horizon == 0 || a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.shape() != (b.ncols(), b.ncols()) {
        return Err(Error::InvalidArgument("inconsistent Riccati dimensions or zero horizon".into()));
    }
    let mut p = vec![q.clone()];
    let mut k = Vec::with_capacity(horizon - 1);
    for _ in 1..horizon {
        let (gain, prev) = riccati_step(a, b, q, r, p.last().expect("nonempty"))?;
        k.push(gain);
        p.push(prev);
    }
    k.reverse();
    Ok(RiccatiSchedule { p, k })
}

/// Convenience wrapper for the tracking-error model.
pub fn lqr_schedule(
    model: &TransitionModel,
    q: &Matrix4<f64>,
    r: &Matrix2<f64>,
    horizon: usize,
) -> Result<RiccatiSchedule> {
    let to_dyn = |m: &[f64], rows, cols| DMatrix::from_column_slice(rows, cols, m);
    riccati_backward(
        &to_dyn(model.a.as_slice(), 4, 4),
        &to_dyn(model.b.as_slice(), 4, 2),
        &to_dyn(q.as_slice(), 4, 4),
        &to_dyn(r.as_slice(), 2, 2),
        horizon,
    )
}

/// `u = -K e_hat`, clipped to `a_max`, then adjusted so the next velocity lies in the `V_max` ball.
///
/// The velocity projection can push `||u||` above `a_max`; no second clip is applied.
pub fn lqg_control(
    e_hat: &Vector4<f64>,
    gain: &DMatrix<f64>,
    v_uav: &Vector2<f64>,
    a_max: f64,
    v_max: f64,
    dt: f64,
) -> Vector2<f64> {
    let raw = -(gain * DVector::from_column_slice(e_hat.as_slice()));
    let mut u = Vector2::new(raw[0], raw[1]);
    let norm = u.norm();
    if norm > a_max {
        u *= a_max / norm;
    }
    let v_next = v_uav + u * dt;
    let speed = v_next.norm();
    if speed > v_max {
        let v_proj = v_next * (v_max / speed);
        u = (v_proj - v_uav) / dt;
    }
    u
}

/// Motion limits shared by the controllers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionBounds {
    pub a_max: f64,
    pub v_max: f64,
}

/// Deterministic horizon MPC tracking the known future target states `s^t[n+1..=n+N0]`.
pub fn noncausal_mpc(
    future_targets: &[Vector4<f64>],
    s_uav: &Vector4<f64>,
    model: &TransitionModel,
    q: &Matrix4<f64>,
    r: &Matrix2<f64>,
    bounds: MotionBounds,
    opts: &SolverOptions,
) -> Result<MpcSolution> {
    let horizon = future_targets.len();
    if horizon == 0 {
        return Err(Error::InvalidArgument("need at least one future target state".into()));
    }
    let n = 2 * horizon;
    let mut upsilon = DMatrix::zeros(n, n);
    let mut g = DVector::zeros(n);
    let mut c_t = 0.0;
    let q_dyn = DMatrix::from_column_slice(4, 4, q.as_slice());
    // Forced response G_i u = sum_j A^{i-1-j} B u_j.
    let mut forced = DMatrix::<f64>::zeros(4, n);
    for (i, target) in future_targets.iter().enumerate() {
        let a = DMatrix::from_column_slice(4, 4, model.a.as_slice());
        forced = &a * &forced;
        forced.view_mut((0, 2 * i), (4, 2)).copy_from(&model.b);
        let free = model.a_power(i + 1) * s_uav - target;
        let free = DVector::from_column_slice(free.as_slice());
        let gt_q = forced.transpose() * &q_dyn;
        upsilon += &gt_q * &forced;
        g += &gt_q * &free;
        c_t += free.dot(&(&q_dyn * &free));
        upsilon.view_mut((2 * i, 2 * i), (2, 2)).add_assign(r);
    }
    let problem = MpcProblem::motion_only(
        upsilon,
        g,
        c_t,
        Vector2::new(s_uav[2], s_uav[3]),
        model.dt,
        bounds.a_max,
        bounds.v_max,
        horizon,
    )?;
    solve(&problem, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::build_transition;
    use approx::assert_relative_eq;

    fn scalar(x: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, x)
    }

    #[test]
    fn scalar_converges_to_golden_ratio() {
        let one = scalar(1.0);
        let sched = riccati_backward(&one, &one, &one, &one, 60).unwrap();
        assert_relative_eq!(sched.cost_to_go(1)[(0, 0)], (1.0 + 5f64.sqrt()) / 2.0, epsilon = 1e-9);
    }

    #[test]
    fn zero_state_weight_gives_zero_schedule() {
        let model = build_transition(0.2, [0.0; 4]).unwrap();
        let sched = lqr_schedule(&model, &Matrix4::zeros(), &Matrix2::identity(), 10).unwrap();
        assert!(sched.p.iter().all(|p| p.norm() == 0.0));
        assert!(sched.k.iter().all(|k| k.norm() == 0.0));
    }

    #[test]
    fn single_step_has_no_gains() {
        let model = build_transition(0.2, [0.0; 4]).unwrap();
        let sched = lqr_schedule(&model, &Matrix4::identity(), &Matrix2::identity(), 1).unwrap();
        assert!(sched.k.is_empty());
        assert_eq!(sched.cost_to_go(1), &DMatrix::<f64>::identity(4, 4));
    }

    #[test]
    fn stored_schedule_reproduces_itself() {
        let model = build_transition(0.2, [0.0; 4]).unwrap();
        let q = Matrix4::identity();
        let r = Matrix2::identity();
        let sched = lqr_schedule(&model, &q, &r, 20).unwrap();
        let a = DMatrix::from_column_slice(4, 4, model.a.as_slice());
        let b = DMatrix::from_column_slice(4, 2, model.b.as_slice());
        let qd = DMatrix::identity(4, 4);
        let rd = DMatrix::identity(2, 2);
        for k in 1..20 {
            let (gain, p) = riccati_step(&a, &b, &qd, &rd, sched.cost_to_go(k + 1)).unwrap();
            assert_relative_eq!(p.as_slice(), sched.cost_to_go(k).as_slice(), epsilon = 1e-12);
            assert_relative_eq!(gain.as_slice(), sched.gain(k).as_slice(), epsilon = 1e-12);
            let eig = sched.cost_to_go(k).clone().symmetric_eigen().eigenvalues.min();
            assert!(eig >= -1e-12);
        }
    }

    #[test]
    fn lqg_control_cases() {
        let gain = DMatrix::from_row_slice(2, 4, &[0.5, 0.0, 0.8, 0.0, 0.0, 0.5, 0.0, 0.8]);
        let zero = lqg_control(&Vector4::zeros(), &gain, &Vector2::zeros(), 10.0, 30.0, 0.2);
        assert_eq!(zero, Vector2::zeros());

        let e = Vector4::new(2.0, -1.0, 0.5, 0.2);
        let u = lqg_control(&e, &gain, &Vector2::zeros(), 10.0, 30.0, 0.2);
        assert_relative_eq!(u, Vector2::new(-1.4, 0.34), epsilon = 1e-12);

        let big = Vector4::new(100.0, 0.0, 0.0, 0.0);
        let clipped = lqg_control(&big, &gain, &Vector2::zeros(), 10.0, 30.0, 0.2);
        assert_relative_eq!(clipped.norm(), 10.0, epsilon = 1e-12);

        let v = Vector2::new(-29.5, 0.0);
        let projected = lqg_control(&big, &gain, &v, 10.0, 30.0, 0.2);
        assert_relative_eq!((v + projected * 0.2).norm(), 30.0, epsilon = 1e-9);
    }

    #[test]
    fn stationary_target_needs_no_control() {
        let model = build_transition(0.2, [0.0; 4]).unwrap();
        let s = Vector4::new(10.0, 20.0, 0.0, 0.0);
        let bounds = MotionBounds { a_max: 10.0, v_max: 30.0 };
        let sol = noncausal_mpc(
            &[s; 4],
            &s,
            &model,
            &Matrix4::identity(),
            &Matrix2::identity(),
            bounds,
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(sol.u_hat.norm() < 1e-7);
    }
}
