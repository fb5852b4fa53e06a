//! Discrete-time kinematics for the UAV, the target, and the tracking error.
//!
//! Both platforms share the constant-acceleration transition pair `(A, B)`;
//! the UAV is driven by a deterministic acceleration command while the target
//! follows a constant-velocity model perturbed by zero-mean Gaussian noise
//! with diagonal covariance `Qs`.

use nalgebra::{Matrix4, Matrix4x2, Vector2, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Horizontal position and velocity of a platform, `[px, py, vx, vy]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionState {
    pub p: Vector2<f64>,
    pub v: Vector2<f64>,
}

impl MotionState {
    pub fn new(px: f64, py: f64, vx: f64, vy: f64) -> Self {
        Self { p: Vector2::new(px, py), v: Vector2::new(vx, vy) }
    }

    pub fn from_vector(s: &Vector4<f64>) -> Self {
        Self::new(s[0], s[1], s[2], s[3])
    }

    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::new(self.p.x, self.p.y, self.v.x, self.v.y)
    }

    pub fn is_finite(&self) -> bool {
        self.p.iter().chain(self.v.iter()).all(|x| x.is_finite())
    }
}

/// Tracking error `e = s_uav - s_target`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorState(pub Vector4<f64>);

impl ErrorState {
    pub fn between(uav: &MotionState, target: &MotionState) -> Self {
        ErrorState(uav.to_vector() - target.to_vector())
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }
}

/// State-transition data shared by the UAV and target models.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionModel {
    pub a: Matrix4<f64>,
    pub b: Matrix4x2<f64>,
    pub dt: f64,
    /// Diagonal process-noise covariance of the target.
    pub qs: Matrix4<f64>,
}

/// Builds `A`, `B` and `Qs` for slot length `dt` and the four noise
/// variances `(sigma_x^2, sigma_y^2, sigma_vx^2, sigma_vy^2)`.
pub fn build_transition(dt: f64, variances: [f64; 4]) -> Result<TransitionModel> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("slot duration must be positive, got {dt}")));
    }
    if variances.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::InvalidArgument(format!("process-noise variances must be nonnegative, got {variances:?}")));
    }
    #[rustfmt::skip]
    let a = Matrix4::new(
        1.0, 0.0, dt,  0.0,
        0.0, 1.0, 0.0, dt,
        0.0, 0.0, 1.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
    );
    let half = 0.5 * dt * dt;
    #[rustfmt::skip]
    let b = Matrix4x2::new(
        half, 0.0,
        0.0,  half,
        dt,   0.0,
        0.0,  dt,
    );
    let qs = Matrix4::from_diagonal(&Vector4::from(variances));
    Ok(TransitionModel { a, b, dt, qs })
}

impl TransitionModel {
    /// `s[n+1] = A s[n] + B u[n]`.
    pub fn step_uav(&self, s: &MotionState, u: &Vector2<f64>) -> MotionState {
        MotionState::from_vector(&(self.a * s.to_vector() + self.b * u))
    }

    /// `s[n+1] = A s[n] + n_s` with an explicit noise realization.
    pub fn step_target(&self, s: &MotionState, noise: &Vector4<f64>) -> MotionState {
        MotionState::from_vector(&(self.a * s.to_vector() + noise))
    }

    /// `e[n+1] = A e[n] + B u[n] - n_s`.
    pub fn step_error(&self, e: &ErrorState, u: &Vector2<f64>, noise: &Vector4<f64>) -> ErrorState {
        ErrorState(self.a * e.0 + self.b * u - noise)
    }

    /// Draws `n_s ~ N(0, Qs)`.
    pub fn sample_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector4<f64> {
        Vector4::from_fn(|i, _| {
            let z: f64 = rng.sample(StandardNormal);
            self.qs[(i, i)].sqrt() * z
        })
    }

    /// `A^i`, computed by repeated multiplication.
    pub fn a_power(&self, i: usize) -> Matrix4<f64> {
        (0..i).fold(Matrix4::identity(), |acc, _| acc * self.a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(dt: f64) -> TransitionModel {
        build_transition(dt, [4e-4, 4e-4, 0.01, 0.01]).unwrap()
    }

    #[test]
    fn transition_entries() {
        let m = model(0.2);
        assert_eq!(m.a[(0, 2)], 0.2);
        assert_eq!(m.a[(1, 3)], 0.2);
        assert_relative_eq!(m.b[(0, 0)], 0.02, epsilon = 1e-15);
        assert_eq!(m.b[(2, 0)], 0.2);

        let m1 = model(1.0);
        #[rustfmt::skip]
        let expected = Matrix4x2::new(0.5, 0.0, 0.0, 0.5, 1.0, 0.0, 0.0, 1.0);
        assert_eq!(m1.b, expected);
        assert_eq!(m1.qs, Matrix4::from_diagonal(&Vector4::new(4e-4, 4e-4, 0.01, 0.01)));
        assert_eq!(m1.a.determinant(), 1.0);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(build_transition(0.0, [0.0; 4]), Err(Error::InvalidArgument(_))));
        assert!(matches!(build_transition(-1.0, [0.0; 4]), Err(Error::InvalidArgument(_))));
        assert!(build_transition(0.1, [0.0, -1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn uav_steps() {
        let m = model(0.2);
        let zero = MotionState::new(0.0, 0.0, 0.0, 0.0);
        assert_eq!(m.step_uav(&zero, &Vector2::zeros()), zero);
        let drift = m.step_uav(&MotionState::new(0.0, 0.0, 1.0, 0.0), &Vector2::zeros());
        assert_eq!(drift, MotionState::new(0.2, 0.0, 1.0, 0.0));
        let accel = m.step_uav(&zero, &Vector2::new(1.0, 0.0));
        assert_relative_eq!(accel.to_vector(), Vector4::new(0.02, 0.0, 0.2, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn target_steps() {
        let m = model(0.2);
        let s = m.step_target(&MotionState::new(0.0, 400.0, 0.0, -1.0), &Vector4::zeros());
        assert_relative_eq!(s.to_vector(), Vector4::new(0.0, 399.8, 0.0, -1.0), epsilon = 1e-12);
        let s = m.step_target(&MotionState::new(0.0, 0.0, 0.0, 0.0), &Vector4::new(0.1, 0.0, 0.0, 0.0));
        assert_eq!(s, MotionState::new(0.1, 0.0, 0.0, 0.0));
    }

    #[test]
    fn error_steps() {
        let m = model(0.2);
        let z = ErrorState(Vector4::zeros());
        assert_eq!(m.step_error(&z, &Vector2::zeros(), &Vector4::zeros()), z);
        let e = ErrorState(Vector4::new(10.0, 0.0, 0.0, 0.0));
        assert_eq!(m.step_error(&e, &Vector2::zeros(), &Vector4::zeros()), e);
    }

    #[test]
    fn a_power_matches_closed_form() {
        let m = model(0.2);
        let a5 = m.a_power(5);
        assert_relative_eq!(a5[(0, 2)], 1.0, epsilon = 1e-12);
        assert_eq!(m.a_power(0), Matrix4::identity());
    }

    #[test]
    fn sampled_noise_matches_covariance() {
        let m = model(0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s0 = MotionState::new(3.0, -2.0, 1.0, 0.5);
        let n = 100_000;
        let mut sum = Vector4::zeros();
        let mut sq = Vector4::zeros();
        let mut fourth = Vector4::zeros();
        for _ in 0..n {
            let noise = m.sample_noise(&mut rng);
            let d = m.step_target(&s0, &noise).to_vector() - m.a * s0.to_vector();
            sum += d;
            sq += d.component_mul(&d);
            fourth += d.map(|x| x.powi(4));
        }
        let nf = n as f64;
        for i in 0..4 {
            let var = m.qs[(i, i)];
            let mean = sum[i] / nf;
            assert!(mean.abs() < 4.0 * var.sqrt() / nf.sqrt(), "mean[{i}] = {mean}");
            // Standard error of the second moment estimate uses the empirical fourth moment.
            let second = sq[i] / nf;
            let se = ((fourth[i] / nf - second * second) / nf).sqrt();
            assert!((second - var).abs() < 5.0 * se, "var[{i}] = {second} vs {var}");
        }
    }
}
