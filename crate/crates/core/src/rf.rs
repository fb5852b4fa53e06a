//! Line-of-sight channel, planar-array steering vectors, achievable rate and
//! the statistical range/Doppler/echo measurement model.
//!
//! The matched-filter output is not simulated at the waveform level. Range
//! and Doppler are the true values plus Gaussian noise whose variance scales
//! with the inverse echo power, and the echo vector is the noiseless
//! `G * beta * b * (a^H w)` plus white Gaussian noise.

use std::f64::consts::PI;

use nalgebra::{DVector, Vector2};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::MotionState;
use crate::error::{Error, Result};

/// Complex column vector (steering vectors, beamformers).
pub type CVector = DVector<Complex64>;

/// Element counts of the transmit and receive uniform planar arrays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    /// `(M_x^t, M_y^t)`
    pub tx: (usize, usize),
    /// `(M_x^r, M_y^r)`
    pub rx: (usize, usize),
}

impl ArrayGeometry {
    pub fn new(tx: (usize, usize), rx: (usize, usize)) -> Result<Self> {
        if tx.0 == 0 || tx.1 == 0 || rx.0 == 0 || rx.1 == 0 {
            return Err(Error::InvalidArgument(format!("antenna counts must be >= 1, got tx={tx:?} rx={rx:?}")));
        }
        Ok(Self { tx, rx })
    }

    /// `M_t`
    pub fn tx_count(&self) -> usize {
        self.tx.0 * self.tx.1
    }

    /// `M_r`
    pub fn rx_count(&self) -> usize {
        self.rx.0 * self.rx.1
    }
}

/// Physical constants of the radio link, all in linear SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct RfConstants {
    /// Channel power gain at 1 m.
    pub beta0: f64,
    pub fc: f64,
    pub c: f64,
    pub lambda: f64,
    /// Radar cross section (m^2).
    pub rcs: f64,
    /// `lambda^2 * rcs / (64 pi^3)`
    pub beta_r: f64,
    /// Noise power at the ground user (W).
    pub sigma_c2: f64,
    /// Radar receiver noise power (W).
    pub sigma_r2: f64,
    /// Matched-filtering gain.
    pub gain: f64,
    pub a1: f64,
    pub a2: f64,
    /// UAV flight altitude (m).
    pub altitude: f64,
}

impl RfConstants {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        beta0: f64,
        fc: f64,
        c: f64,
        rcs: f64,
        sigma_c2: f64,
        sigma_r2: f64,
        gain: f64,
        a1: f64,
        a2: f64,
        altitude: f64,
    ) -> Result<Self> {
        let named = [
            ("beta0", beta0),
            ("fc", fc),
            ("c", c),
            ("rcs", rcs),
            ("sigma_c2", sigma_c2),
            ("sigma_r2", sigma_r2),
            ("gain", gain),
            ("a1", a1),
            ("a2", a2),
            ("altitude", altitude),
        ];
        if let Some((name, value)) = named.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument(format!("{name} must be strictly positive, got {value}")));
        }
        let lambda = c / fc;
        let beta_r = lambda * lambda * rcs / (64.0 * PI.powi(3));
        Ok(Self { beta0, fc, c, lambda, rcs, beta_r, sigma_c2, sigma_r2, gain, a1, a2, altitude })
    }
}

/// Transmit beamforming vector (sqrt(W) per element).
#[derive(Debug, Clone, PartialEq)]
pub struct Beamformer {
    pub w: CVector,
}

impl Beamformer {
    pub fn new(w: CVector) -> Self {
        Self { w }
    }

    pub fn zeros(len: usize) -> Self {
        Self { w: CVector::zeros(len) }
    }

    /// Full-power maximum-ratio transmission toward `a`.
    pub fn mrt(a: &CVector, power: f64) -> Self {
        let norm = a.norm();
        Self { w: a.map(|x| x * (power.sqrt() / norm)) }
    }

    /// `||w||^2`
    pub fn power(&self) -> f64 {
        self.w.norm_squared()
    }

    /// `|a^H w|^2`
    pub fn gain_toward(&self, a: &CVector) -> f64 {
        inner(a, &self.w).norm_sqr()
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

/// `x^H y`
pub fn inner(x: &CVector, y: &CVector) -> Complex64 {
    x.iter().zip(y.iter()).map(|(a, b)| a.conj() * b).sum()
}

/// One slot's sensing observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    /// Range estimate (m).
    pub d_hat: f64,
    /// Doppler estimate (Hz).
    pub mu_hat: f64,
    /// `[Re; Im]` of the matched-filter output, length `2 M_r`.
    pub rho: DVector<f64>,
    /// Diagonal of `Q_m`.
    pub qm_diag: DVector<f64>,
}

impl Measurement {
    /// The stacked measurement `[d_hat, mu_hat, rho]`.
    pub fn to_vector(&self) -> DVector<f64> {
        let mut m = DVector::zeros(2 + self.rho.len());
        m[0] = self.d_hat;
        m[1] = self.mu_hat;
        m.rows_mut(2, self.rho.len()).copy_from(&self.rho);
        m
    }
}

/// 3-D distance between two ground-plane points separated vertically by `altitude`.
pub fn distance(p1: &Vector2<f64>, p2: &Vector2<f64>, altitude: f64) -> f64 {
    ((p1 - p2).norm_squared() + altitude * altitude).sqrt()
}

/// Direction cosines `(Phi, Omega)` from `p_from` toward `p_to` and the distance.
pub fn direction_cosines(p_from: &Vector2<f64>, p_to: &Vector2<f64>, altitude: f64) -> Result<(f64, f64, f64)> {
    let d = distance(p_from, p_to, altitude);
    if !(d > 0.0) {
        return Err(Error::DegenerateGeometry("coincident points at zero altitude".into()));
    }
    Ok(((p_from.x - p_to.x) / d, (p_from.y - p_to.y) / d, d))
}

/// Steering vector built from direction cosines, x-major Kronecker order.
pub fn steering_from_cosines(phi: f64, omega: f64, counts: (usize, usize)) -> CVector {
    let (mx, my) = counts;
    CVector::from_fn(mx * my, |k, _| {
        let (ix, iy) = (k / my, k % my);
        Complex64::from_polar(1.0, PI * (ix as f64 * phi + iy as f64 * omega))
    })
}

/// Half-wavelength UPA steering vector from `p_from` toward `p_to`.
pub fn steering_vector(
    p_from: &Vector2<f64>,
    p_to: &Vector2<f64>,
    altitude: f64,
    counts: (usize, usize),
) -> Result<CVector> {
    let (phi, omega, _) = direction_cosines(p_from, p_to, altitude)?;
    Ok(steering_from_cosines(phi, omega, counts))
}

/// Achievable rate (bps/Hz) at the ground user.
pub fn achievable_rate(
    p_uav: &Vector2<f64>,
    p_gu: &Vector2<f64>,
    w: &Beamformer,
    k: &RfConstants,
    geom: &ArrayGeometry,
) -> Result<f64> {
    let a_c = steering_vector(p_uav, p_gu, k.altitude, geom.tx)?;
    let d2 = distance(p_uav, p_gu, k.altitude).powi(2);
    let snr = k.beta0 * w.gain_toward(&a_c) / (d2 * k.sigma_c2);
    Ok((1.0 + snr).log2())
}

/// Range and Doppler noise variances `(sigma_1^2, sigma_2^2)`.
pub fn measurement_noise_vars(
    w: &Beamformer,
    p_uav: &Vector2<f64>,
    p_target: &Vector2<f64>,
    k: &RfConstants,
    geom: &ArrayGeometry,
) -> Result<(f64, f64)> {
    let (phi, omega, d) = direction_cosines(p_uav, p_target, k.altitude)?;
    let a = steering_from_cosines(phi, omega, geom.tx);
    let gain = w.gain_toward(&a);
    if !(gain > 0.0) {
        return Err(Error::InfiniteVariance);
    }
    // |beta_n|^2 = beta_r / d^4
    let beta_sq = k.beta_r / d.powi(4);
    let denom = k.gain * geom.rx_count() as f64 * beta_sq * gain;
    Ok((k.a1 * k.a1 * k.sigma_r2 / denom, k.a2 * k.a2 * k.sigma_r2 / denom))
}

/// Per-entry variance of the real-valued echo noise, `G sigma_r^2 / 2`.
pub fn echo_noise_var(k: &RfConstants) -> f64 {
    0.5 * k.gain * k.sigma_r2
}

/// Diagonal of `Q_m = diag(sigma_1^2, sigma_2^2, (G sigma_r^2 / 2) 1_{2 M_r})`.
pub fn measurement_covariance(
    w: &Beamformer,
    p_uav: &Vector2<f64>,
    p_target: &Vector2<f64>,
    k: &RfConstants,
    geom: &ArrayGeometry,
) -> Result<DVector<f64>> {
    let (s1, s2) = measurement_noise_vars(w, p_uav, p_target, k, geom)?;
    let mut q = DVector::from_element(2 + 2 * geom.rx_count(), echo_noise_var(k));
    q[0] = s1;
    q[1] = s2;
    Ok(q)
}

/// Noiseless measurement function `f(s_t)` for a given UAV state and beam.
pub fn noiseless_measurement(
    uav: &MotionState,
    target: &MotionState,
    w: &Beamformer,
    k: &RfConstants,
    geom: &ArrayGeometry,
) -> Result<DVector<f64>> {
    let (phi, omega, d) = direction_cosines(&uav.p, &target.p, k.altitude)?;
    let dp = uav.p - target.p;
    let dv = uav.v - target.v;
    let mu = -2.0 * k.fc * dp.dot(&dv) / (k.c * d);

    let a = steering_from_cosines(phi, omega, geom.tx);
    let b = steering_from_cosines(phi, omega, geom.rx);
    let scale = inner(&a, &w.w) * (k.gain * k.beta_r.sqrt() / (d * d));
    let mr = geom.rx_count();

    let mut f = DVector::zeros(2 + 2 * mr);
    f[0] = d;
    f[1] = mu;
    for (m, bm) in b.iter().enumerate() {
        let echo = bm * scale;
        f[2 + m] = echo.re;
        f[2 + mr + m] = echo.im;
    }
    Ok(f)
}

/// Received echo SNR after matched filtering, `G M_r beta_r |a^H w|^2 / (sigma_r^2 d^4)`.
pub fn echo_snr(
    p_uav: &Vector2<f64>,
    p_target: &Vector2<f64>,
    w: &Beamformer,
    k: &RfConstants,
    geom: &ArrayGeometry,
) -> Result<f64> {
    let (phi, omega, d) = direction_cosines(p_uav, p_target, k.altitude)?;
    let a = steering_from_cosines(phi, omega, geom.tx);
    Ok(k.gain * geom.rx_count() as f64 * k.beta_r * w.gain_toward(&a) / (k.sigma_r2 * d.powi(4)))
}

/// Measurement with an explicit standard-normal noise realization `z`
/// (length `2 + 2 M_r`), scaled entrywise by `sqrt(Q_m)`.
pub fn measurement_with_noise(
    uav: &MotionState,
    target: &MotionState,
    w: &Beamformer,
    k: &RfConstants,
    geom: &ArrayGeometry,
    z: &DVector<f64>,
) -> Result<Measurement> {
    let f = noiseless_measurement(uav, target, w, k, geom)?;
    let qm_diag = measurement_covariance(w, &uav.p, &target.p, k, geom)?;
    if z.len() != f.len() {
        return Err(Error::InvalidArgument(format!(
            "noise length {} does not match measurement length {}",
            z.len(),
            f.len()
        )));
    }
    let m = f + qm_diag.map(f64::sqrt).component_mul(z);
    let mr = geom.rx_count();
    Ok(Measurement { d_hat: m[0], mu_hat: m[1], rho: m.rows(2, 2 * mr).into_owned(), qm_diag })
}

/// Draws a noisy measurement of the true target.
pub fn sample_measurement<R: Rng + ?Sized>(
    uav: &MotionState,
    target: &MotionState,
    w: &Beamformer,
    k: &RfConstants,
    geom: &ArrayGeometry,
    rng: &mut R,
) -> Result<Measurement> {
    let z = DVector::from_fn(2 + 2 * geom.rx_count(), |_, _| rng.sample(StandardNormal));
    measurement_with_noise(uav, target, w, k, geom, &z)
}
