//! Slow reference computations used to cross-check the closed forms.
//!
//! Nothing here is on the simulation path. Each routine reaches the same
//! quantity as a fast path in the library by a different route: finite
//! differences, sampling, iterative optimization or brute-force search.

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::dynamics::TransitionModel;
use crate::mpc::{MpcProblem, StackedModel};
use crate::rf::{inner, CVector};

/// Central-difference Jacobian of `f` at `x` with per-coordinate step `h * max(1, |x_j|)`.
pub fn central_difference_jacobian<F>(f: F, x: &DVector<f64>, h: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let f0 = f(x);
    let mut jac = DMatrix::zeros(f0.len(), x.len());
    for j in 0..x.len() {
        let step = h * x[j].abs().max(1.0);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += step;
        xm[j] -= step;
        let col = (f(&xp) - f(&xm)) / (2.0 * step);
        jac.set_column(j, &col);
    }
    jac
}

/// Symmetric square root factor `L` with `L L^T = m` for a PSD matrix.
fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let sqrt_vals = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals)
}

/// Sample mean and standard error of a scalar statistic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub samples: usize,
}

const CHUNKS: u64 = 64;

/// Monte Carlo estimate of `E{d^4}` at horizon step `i` by sampling the
/// stacked noise `n_bar ~ N(0, N_bar)` and pushing it through `Lambda_i`.
pub fn monte_carlo_d4(
    sm: &StackedModel,
    u_hat: &DVector<f64>,
    i: usize,
    altitude: f64,
    samples: usize,
    seed: u64,
) -> SampleEstimate {
    let st = sm.step(i);
    let mean = st.error_mean(u_hat);
    let c_lambda = st.c_lambda();
    let factor = c_lambda.clone() * psd_factor(&st.n_bar);
    let h2 = altitude * altitude;
    let dim = factor.ncols();
    let per_chunk = samples.div_ceil(CHUNKS as usize);
    let (sum, sum_sq, count) = (0..CHUNKS)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c);
            let n = per_chunk.min(samples.saturating_sub(c as usize * per_chunk));
            let mut z = DVector::zeros(dim);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..n {
                z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                let p = &factor * &z;
                let d2 = (mean[0] + p[0]).powi(2) + (mean[1] + p[1]).powi(2) + h2;
                let d4 = d2 * d2;
                s += d4;
                s2 += d4 * d4;
            }
            (s, s2, n)
        })
        .reduce(|| (0.0, 0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    let m = count as f64;
    let mean_d4 = sum / m;
    let var = (sum_sq / m - mean_d4 * mean_d4).max(0.0) * m / (m - 1.0);
    SampleEstimate { mean: mean_d4, std_err: (var / m).sqrt(), samples: count }
}

/// Mean and covariance of `e_{n+1}, ..., e_{n+N0}` by one-step recursion
/// `e <- A e + B u`, `Sigma <- A Sigma A^T + Qs`.
pub fn propagate_error(
    e_hat: &Vector4<f64>,
    m_hat: &Matrix4<f64>,
    model: &TransitionModel,
    u_hat: &DVector<f64>,
) -> Vec<(Vector4<f64>, Matrix4<f64>)> {
    let mut e = *e_hat;
    let mut cov = *m_hat;
    (0..u_hat.len() / 2)
        .map(|k| {
            let u = nalgebra::Vector2::new(u_hat[2 * k], u_hat[2 * k + 1]);
            e = model.a * e + model.b * u;
            cov = model.a * cov * model.a.transpose() + model.qs;
            (e, cov)
        })
        .collect()
}

/// Settings for the beamforming search.
#[derive(Debug, Clone, Copy)]
pub struct BeamSearch {
    pub restarts: usize,
    pub max_iterations: usize,
    /// Stop once a step moves `w` by less than this.
    pub step_tol: f64,
    pub seed: u64,
}

impl Default for BeamSearch {
    fn default() -> Self {
        Self { restarts: 8, max_iterations: 100_000, step_tol: 1e-14, seed: 7 }
    }
}

/// Best point found by [`maximize_constrained_gain`].
#[derive(Debug, Clone)]
pub struct BeamOptimum {
    pub w: CVector,
    pub gain: f64,
}

/// Nearest point to `(x, y)` in `{a >= a0, b >= 0, a^2 + b^2 <= power}`.
fn project_radii(x: f64, y: f64, a0: f64, power: f64) -> (f64, f64) {
    let r2 = x * x + y * y;
    if x >= a0 && r2 <= power {
        return (x, y);
    }
    let b_max = (power - a0 * a0).max(0.0).sqrt();
    let mut best = (a0, y.clamp(0.0, b_max));
    let r = r2.sqrt();
    if r > 0.0 {
        let s = power.sqrt() / r;
        if x * s >= a0 {
            let arc = (x * s, y * s);
            if (arc.0 - x).powi(2) + (arc.1 - y).powi(2) < (best.0 - x).powi(2) + (best.1 - y).powi(2) {
                best = arc;
            }
        }
    }
    best
}

/// `max |o^H w|^2` s.t. `|c^H w|^2 >= required`, `||w||^2 <= power`.
///
/// Projected gradient ascent from random starts. The feasible set is not
/// convex, but its Euclidean projection is exact: keep the phase of the
/// component along `c` and the direction of the orthogonal remainder, and
/// project the two magnitudes onto a convex planar region.
pub fn maximize_constrained_gain(
    o: &CVector,
    c: &CVector,
    required: f64,
    power: f64,
    opts: BeamSearch,
) -> Option<BeamOptimum> {
    let c_norm = c.norm();
    let a0 = required.max(0.0).sqrt() / c_norm;
    if a0 * a0 > power * (1.0 + 1e-12) {
        return None;
    }
    let c_hat = c / Complex64::from(c_norm);
    let project = |w: &CVector| -> CVector {
        let alpha = inner(&c_hat, w);
        let perp = w - &c_hat * alpha;
        let (x, y) = (alpha.norm(), perp.norm());
        let (a, b) = project_radii(x, y, a0, power);
        let phase = if x > 0.0 { alpha / x } else { Complex64::new(1.0, 0.0) };
        let mut out = &c_hat * (phase * a);
        if y > 0.0 {
            out += perp * Complex64::from(b / y);
        }
        out
    };
    let step = 0.5 / o.norm_squared();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<BeamOptimum> = None;
    for _ in 0..opts.restarts {
        let start =
            CVector::from_fn(o.len(), |_, _| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
        let mut w = project(&(start * Complex64::from(power.sqrt())));
        for _ in 0..opts.max_iterations {
            let next = project(&(&w + o * (inner(o, &w) * step)));
            let moved = (&next - &w).norm();
            w = next;
            if moved < opts.step_tol {
                break;
            }
        }
        let gain = inner(o, &w).norm_sqr();
        if best.as_ref().map_or(true, |b| gain > b.gain) {
            best = Some(BeamOptimum { w, gain });
        }
    }
    best
}

/// Brute-force minimizer over a box of controls.
#[derive(Debug, Clone, Copy)]
pub struct GridSearch {
    pub points: usize,
    pub levels: usize,
    pub shrink: f64,
}

impl Default for GridSearch {
    fn default() -> Self {
        Self { points: 201, levels: 12, shrink: 8.0 }
    }
}

/// Minimizes a single-step (`N0 = 1`) problem by nested grid refinement.
///
/// Starts on the square `[-a_max, a_max]^2` and repeatedly zooms around the
/// best feasible grid point. Returns `None` if no grid point is feasible.
pub fn grid_search_single_step(p: &MpcProblem, opts: GridSearch) -> Option<(DVector<f64>, f64)> {
    assert_eq!(p.horizon, 1, "grid search handles one control step");
    let feasible = |u: &DVector<f64>| p.constraint_values(u).iter().all(|&f| f <= 0.0);
    let mut center = (0.0, 0.0);
    let mut half = p.a_max;
    let mut best: Option<(DVector<f64>, f64)> = None;
    for _ in 0..opts.levels {
        let span = opts.points - 1;
        for a in 0..opts.points {
            for b in 0..opts.points {
                let u = DVector::from_vec(vec![
                    center.0 - half + 2.0 * half * a as f64 / span as f64,
                    center.1 - half + 2.0 * half * b as f64 / span as f64,
                ]);
                if !feasible(&u) {
                    continue;
                }
                let v = p.objective_value(&u);
                if best.as_ref().map_or(true, |(_, bv)| v < *bv) {
                    best = Some((u, v));
                }
            }
        }
        let (u, _) = best.as_ref()?;
        center = (u[0], u[1]);
        half /= opts.shrink;
    }
    best
}

/// Iterates the scalar Riccati map `p <- q + a^2 p - (a b p)^2 / (r + b^2 p)` from `p0`.
pub fn scalar_dare(a: f64, b: f64, q: f64, r: f64, p0: f64, iterations: usize) -> f64 {
    (0..iterations).fold(p0, |p, _| q + a * a * p - (a * b * p).powi(2) / (r + b * b * p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::build_transition;
    use crate::mpc::build_stacked;
    use approx::assert_relative_eq;
    use nalgebra::Matrix2;

    #[test]
    fn central_difference_of_a_polynomial() {
        let f = |x: &DVector<f64>| DVector::from_vec(vec![x[0] * x[0] * x[1], x[1].powi(3)]);
        let x = DVector::from_vec(vec![1.5, -2.0]);
        let jac = central_difference_jacobian(f, &x, 1e-5);
        assert_relative_eq!(jac[(0, 0)], 2.0 * 1.5 * -2.0, epsilon = 1e-7);
        assert_relative_eq!(jac[(0, 1)], 2.25, epsilon = 1e-7);
        assert_relative_eq!(jac[(1, 0)], 0.0, epsilon = 1e-7);
        assert_relative_eq!(jac[(1, 1)], 12.0, epsilon = 1e-6);
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let model = build_transition(0.2, [4e-4, 4e-4, 0.01, 0.01]).unwrap();
        let m_hat = Matrix4::from_diagonal(&Vector4::new(4.0, 4.0, 0.1, 0.1));
        let sm = build_stacked(
            &Vector4::new(5.0, -3.0, 0.2, 0.1),
            &Vector4::zeros(),
            &m_hat,
            &model,
            2,
            &Matrix4::identity(),
            &Matrix2::identity(),
        )
        .unwrap();
        let u = DVector::from_vec(vec![0.5, -0.5, 0.1, 0.2]);
        let a = monte_carlo_d4(&sm, &u, 2, 50.0, 10_000, 3);
        let b = monte_carlo_d4(&sm, &u, 2, 50.0, 10_000, 3);
        assert_eq!(a, b);
        assert_eq!(a.samples, 10_000);
    }

    #[test]
    fn beam_search_matches_mrt_when_unconstrained() {
        let o = CVector::from_fn(4, |k, _| Complex64::from_polar(1.0, 0.3 * k as f64));
        let c = CVector::from_fn(4, |k, _| Complex64::from_polar(1.0, -1.1 * k as f64));
        let best = maximize_constrained_gain(&o, &c, 0.0, 0.25, BeamSearch::default()).unwrap();
        assert_relative_eq!(best.gain, 1.0, max_relative = 1e-9);
    }

    #[test]
    fn beam_search_respects_the_constraint() {
        let o = CVector::from_fn(4, |k, _| Complex64::from_polar(1.0, 0.3 * k as f64));
        let c = CVector::from_fn(4, |k, _| Complex64::from_polar(1.0, -1.1 * k as f64));
        let best = maximize_constrained_gain(&o, &c, 3.0, 1.0, BeamSearch::default()).unwrap();
        assert!(inner(&c, &best.w).norm_sqr() >= 3.0 * (1.0 - 1e-12));
        assert!(best.w.norm_squared() <= 1.0 + 1e-12);
        assert!(maximize_constrained_gain(&o, &c, 4.5, 1.0, BeamSearch::default()).is_none());
    }

    #[test]
    fn radii_projection_cases() {
        assert_eq!(project_radii(0.5, 0.5, 0.2, 1.0), (0.5, 0.5));
        assert_eq!(project_radii(0.1, 0.3, 0.2, 1.0), (0.2, 0.3));
        let (a, b) = project_radii(3.0, 4.0, 0.2, 1.0);
        assert_relative_eq!(a, 0.6, epsilon = 1e-15);
        assert_relative_eq!(b, 0.8, epsilon = 1e-15);
        let (a, b) = project_radii(0.0, 5.0, 0.6, 1.0);
        assert_relative_eq!(a, 0.6);
        assert_relative_eq!(b, 0.8, epsilon = 1e-15);
    }

    #[test]
    fn golden_ratio_fixed_point() {
        let p = scalar_dare(1.0, 1.0, 1.0, 1.0, 1.0, 100);
        assert_relative_eq!(p, (1.0 + 5f64.sqrt()) / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn grid_search_finds_unconstrained_minimum() {
        let upsilon = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let g = DVector::from_vec(vec![-1.0, 0.5]);
        let p =
            MpcProblem::motion_only(upsilon.clone(), g.clone(), 0.0, nalgebra::Vector2::zeros(), 0.2, 10.0, 30.0, 1)
                .unwrap();
        let (u, _) = grid_search_single_step(&p, GridSearch::default()).unwrap();
        let exact = -upsilon.lu().solve(&g).unwrap();
        assert!((u - exact).norm() < 1e-6);
    }
}
