//! Convex horizon program: quadratic objective, motion balls and quartic
//! sensing constraints, all in the stacked control vector.

use nalgebra::{DMatrix, DVector, Vector2};

use super::stacked::{expected_d4, expected_quadratic, StackedModel};
use crate::error::{Error, Result};

/// `x^T P x + 2 q^T x + r`
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub r: f64,
}

impl Quadratic {
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.p * x)) + 2.0 * self.q.dot(x) + self.r
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (&self.p * x + &self.q) * 2.0
    }

    pub fn hessian(&self) -> DMatrix<f64> {
        &self.p * 2.0
    }

    /// `||M x + b||^2 - radius^2`
    pub fn ball(m: &DMatrix<f64>, b: &DVector<f64>, radius: f64) -> Self {
        Self { p: m.transpose() * m, q: m.transpose() * b, r: b.norm_squared() - radius * radius }
    }
}

/// `h(u) = Gamma_th * q(u)^2 + u^T Xi u + 2 zeta^T u + varpi <= 0`,
/// with `q(u)` the noise-free squared horizontal UAV-target distance.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingConstraint {
    pub distance: Quadratic,
    pub gamma_th: f64,
    /// `Xi`, `zeta`, `varpi`
    pub affine: Quadratic,
}

impl SensingConstraint {
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        let q = self.distance.value(x);
        self.gamma_th * q * q + self.affine.value(x)
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let q = self.distance.value(x);
        self.distance.gradient(x) * (2.0 * self.gamma_th * q) + self.affine.gradient(x)
    }

    /// PSD wherever `q >= 0`, which always holds since `Lambda^c` is PSD.
    pub fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let q = self.distance.value(x);
        let dq = self.distance.gradient(x);
        (&dq * dq.transpose() * 2.0 + self.distance.hessian() * (2.0 * q)) * self.gamma_th + self.affine.hessian()
    }
}

/// Scalar inputs of the sensing and motion constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintParams {
    pub gamma_th: f64,
    pub eta: f64,
    pub gamma: f64,
    pub altitude: f64,
    pub p_gu: Vector2<f64>,
    /// One alignment indicator per horizon step.
    pub deltas: Vec<u8>,
    pub a_max: f64,
    pub v_max: f64,
}

#[derive(Debug, Clone)]
pub struct MpcProblem {
    pub horizon: usize,
    /// `u^T Upsilon u + 2 g^T u + c_t`
    pub objective: Quadratic,
    /// Acceleration balls for steps `1..=N0`, then speed balls for steps `1..=N0`, in squared form.
    pub motion: Vec<Quadratic>,
    pub sensing: Vec<SensingConstraint>,
    pub v_uav: Vector2<f64>,
    pub dt: f64,
    pub a_max: f64,
    pub v_max: f64,
}

impl MpcProblem {
    /// Problem with only the acceleration and speed bounds.
    #[allow(clippy::too_many_arguments)]
    pub fn motion_only(
        upsilon: DMatrix<f64>,
        g: DVector<f64>,
        c_t: f64,
        v_uav: Vector2<f64>,
        dt: f64,
        a_max: f64,
        v_max: f64,
        horizon: usize,
    ) -> Result<Self> {
        let n = 2 * horizon;
        if horizon == 0 || upsilon.shape() != (n, n) || g.len() != n {
            return Err(Error::InvalidArgument("objective dimensions do not match the horizon".into()));
        }
        if !(a_max > 0.0 && v_max > 0.0 && dt > 0.0) {
            return Err(Error::InvalidArgument("motion bounds and dt must be positive".into()));
        }
        Ok(Self {
            horizon,
            objective: Quadratic { p: upsilon, q: g, r: c_t },
            motion: motion_constraints(horizon, &v_uav, dt, a_max, v_max),
            sensing: Vec::new(),
            v_uav,
            dt,
            a_max,
            v_max,
        })
    }

    pub fn dim(&self) -> usize {
        2 * self.horizon
    }

    pub fn objective_value(&self, u: &DVector<f64>) -> f64 {
        self.objective.value(u)
    }

    /// Every constraint function value; feasible iff all are `<= 0`.
    pub fn constraint_values(&self, u: &DVector<f64>) -> Vec<f64> {
        self.motion.iter().map(|c| c.value(u)).chain(self.sensing.iter().map(|c| c.value(u))).collect()
    }

    pub fn constraint_count(&self) -> usize {
        self.motion.len() + self.sensing.len()
    }

    /// Largest violation of the original (non-squared) motion bounds and of the sensing constraints.
    pub fn max_violation(&self, u: &DVector<f64>) -> f64 {
        let mut worst = 0.0f64;
        let mut v = self.v_uav;
        for i in 0..self.horizon {
            let ui = Vector2::new(u[2 * i], u[2 * i + 1]);
            v += ui * self.dt;
            worst = worst.max(ui.norm() - self.a_max).max(v.norm() - self.v_max);
        }
        self.sensing.iter().fold(worst, |w, c| w.max(c.value(u)))
    }
}

fn motion_constraints(horizon: usize, v_uav: &Vector2<f64>, dt: f64, a_max: f64, v_max: f64) -> Vec<Quadratic> {
    let n = 2 * horizon;
    let select = |i: usize| {
        let mut e = DMatrix::zeros(2, n);
        e[(0, 2 * i)] = 1.0;
        e[(1, 2 * i + 1)] = 1.0;
        e
    };
    let zero = DVector::zeros(2);
    let v = DVector::from_column_slice(v_uav.as_slice());
    let accel = (0..horizon).map(|i| Quadratic::ball(&select(i), &zero, a_max));
    let speed = (0..horizon).map(|i| {
        let sum = (0..=i).fold(DMatrix::zeros(2, n), |acc, j| acc + select(j));
        Quadratic::ball(&(sum * dt), &v, v_max)
    });
    accel.chain(speed).collect()
}

/// Assembles the full horizon program from the stacked model.
pub fn build_problem(sm: &StackedModel, params: &ConstraintParams) -> Result<MpcProblem> {
    let n = sm.dim();
    if params.deltas.len() != sm.horizon {
        return Err(Error::InvalidArgument(format!(
            "expected {} alignment indicators, got {}",
            sm.horizon,
            params.deltas.len()
        )));
    }
    let mut upsilon = DMatrix::zeros(n, n);
    for i in 0..sm.horizon {
        upsilon.view_mut((2 * i, 2 * i), (2, 2)).copy_from(&sm.r);
    }
    let mut g = DVector::zeros(n);
    let mut c_t = 0.0;
    let h2 = params.altitude * params.altitude;
    let p_gu = DVector::from_column_slice(params.p_gu.as_slice());
    let mut sensing = Vec::with_capacity(sm.horizon);
    for (st, &delta) in sm.steps.iter().zip(&params.deltas) {
        let s = &st.select;
        let st_lq = s.transpose() * &st.lambda_q;
        upsilon += &st_lq * s;
        g += &st_lq * &st.c_bar;
        c_t += st.c_bar.dot(&(&st.lambda_q * &st.c_bar)) + (&st.n_bar * &st.lambda_q).trace();

        let st_lc = s.transpose() * &st.lambda_c;
        let lc_s = &st_lc * s;
        let ln = &st.lambda_c * &st.n_bar;
        let tr = ln.trace();
        let tr_sq = (&ln * &ln).trace();
        let lnl = &ln * &st.lambda_c;
        let quad_c = st.c_bar.dot(&(&st.lambda_c * &st.c_bar));
        let gth = params.gamma_th;
        let de = f64::from(delta) * params.eta;
        let lt_ct_pu = st.c_lambda().transpose() * &p_gu;

        let xi = &lc_s * de + s.transpose() * &lnl * s * (4.0 * gth) + &lc_s * (2.0 * gth * (h2 + tr));
        let zeta = s.transpose() * (&st.lambda_c * &st.c_tilde - &lt_ct_pu) * de
            + s.transpose() * (&lnl * &st.c_bar) * (4.0 * gth)
            + &st_lc * &st.c_bar * (2.0 * gth * (h2 + tr));
        let varpi = gth
            * (4.0 * st.c_bar.dot(&(&lnl * &st.c_bar))
                + 2.0 * quad_c * tr
                + tr * tr
                + 2.0 * tr_sq
                + 2.0 * h2 * (quad_c + tr)
                + h2 * h2)
            + de * (st.c_tilde.dot(&(&st.lambda_c * &st.c_tilde)) - 2.0 * st.c_tilde.dot(&lt_ct_pu)
                + p_gu.norm_squared()
                + h2)
            - params.gamma;
        sensing.push(SensingConstraint {
            distance: Quadratic { p: lc_s, q: &st_lc * &st.c_bar, r: quad_c },
            gamma_th: gth,
            affine: Quadratic { p: xi, q: zeta, r: varpi },
        });
    }
    let v_uav = Vector2::new(sm.s_uav[2], sm.s_uav[3]);
    let mut problem = MpcProblem::motion_only(upsilon, g, c_t, v_uav, sm.dt, params.a_max, params.v_max, sm.horizon)?;
    problem.sensing = sensing;
    Ok(problem)
}

/// Objective recomputed step by step from the expectations.
pub fn objective_by_terms(sm: &StackedModel, u: &DVector<f64>) -> f64 {
    (1..=sm.horizon)
        .map(|i| {
            let ui = u.rows(2 * i - 2, 2);
            expected_quadratic(sm, u, i) + ui.dot(&(sm.r * ui))
        })
        .sum()
}

/// `delta * eta * d_c^2 + Gamma_th * E{d^4} - gamma` recomputed directly for step `i`.
pub fn sensing_value_by_terms(sm: &StackedModel, params: &ConstraintParams, u: &DVector<f64>, i: usize) -> f64 {
    let st = sm.step(i);
    let p_uav = st.c_lambda() * st.u_tilde(u);
    let d_c2 = (Vector2::new(p_uav[0], p_uav[1]) - params.p_gu).norm_squared() + params.altitude.powi(2);
    f64::from(params.deltas[i - 1]) * params.eta * d_c2 + params.gamma_th * expected_d4(sm, u, i, params.altitude)
        - params.gamma
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::build_transition;
    use crate::mpc::stacked::build_stacked;
    use approx::assert_relative_eq;
    use nalgebra::{Matrix2, Matrix4, Vector4};

    fn fixture(deltas: Vec<u8>) -> (StackedModel, ConstraintParams) {
        let model = build_transition(0.2, [4e-4, 4e-4, 0.01, 0.01]).unwrap();
        let s_uav = Vector4::new(0.0, 150.0, 2.0, -1.0);
        let s_tgt = Vector4::new(20.0, 390.0, 1.5, -2.0);
        let m_hat = Matrix4::from_diagonal(&Vector4::new(3.0, 2.0, 0.5, 0.4));
        let sm = build_stacked(&(s_uav - s_tgt), &s_uav, &m_hat, &model, 3, &Matrix4::identity(), &Matrix2::identity())
            .unwrap();
        let params = ConstraintParams {
            gamma_th: 3.9e-8,
            eta: 4.66e-5,
            gamma: 16.0,
            altitude: 50.0,
            p_gu: Vector2::new(300.0, 50.0),
            deltas,
            a_max: 10.0,
            v_max: 30.0,
        };
        (sm, params)
    }

    fn point() -> DVector<f64> {
        DVector::from_vec(vec![1.5, -2.0, 0.3, 4.0, -3.0, 0.7])
    }

    #[test]
    fn objective_matches_terms() {
        let (sm, params) = fixture(vec![1, 1, 1]);
        let p = build_problem(&sm, &params).unwrap();
        let u = point();
        assert_relative_eq!(p.objective_value(&u), objective_by_terms(&sm, &u), max_relative = 1e-9);
    }

    #[test]
    fn sensing_matches_terms() {
        let (sm, params) = fixture(vec![1, 0, 1]);
        let p = build_problem(&sm, &params).unwrap();
        let u = point();
        for i in 1..=3 {
            let direct = sensing_value_by_terms(&sm, &params, &u, i);
            assert_relative_eq!(p.sensing[i - 1].value(&u), direct, max_relative = 1e-9, epsilon = 1e-9);
        }
    }

    #[test]
    fn zero_delta_drops_rate_terms() {
        let (sm, with) = fixture(vec![1, 1, 1]);
        let without = ConstraintParams { deltas: vec![0, 0, 0], eta: 0.0, ..with.clone() };
        let (sm0, zeroed) = fixture(vec![0, 0, 0]);
        let a = build_problem(&sm0, &zeroed).unwrap();
        let b = build_problem(&sm, &without).unwrap();
        for (x, y) in a.sensing.iter().zip(&b.sensing) {
            assert_eq!(x.affine, y.affine);
        }
        let c = build_problem(&sm, &with).unwrap();
        assert!(c.sensing[0].affine.p != a.sensing[0].affine.p);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let (sm, params) = fixture(vec![1, 1, 1]);
        let p = build_problem(&sm, &params).unwrap();
        let u = point();
        let h = 1e-5;
        for c in &p.sensing {
            let g = c.gradient(&u);
            let hess = c.hessian(&u);
            for k in 0..u.len() {
                let mut up = u.clone();
                let mut dn = u.clone();
                up[k] += h;
                dn[k] -= h;
                let fd = (c.value(&up) - c.value(&dn)) / (2.0 * h);
                assert_relative_eq!(g[k], fd, max_relative = 1e-6, epsilon = 1e-8);
                let fd_g = (c.gradient(&up) - c.gradient(&dn)) / (2.0 * h);
                for j in 0..u.len() {
                    assert_relative_eq!(hess[(j, k)], fd_g[j], max_relative = 1e-5, epsilon = 1e-7);
                }
            }
        }
    }

    #[test]
    fn motion_constraints_match_bounds() {
        let (sm, params) = fixture(vec![1, 1, 1]);
        let p = build_problem(&sm, &params).unwrap();
        let u = point();
        let vals = p.constraint_values(&u);
        let mut v = Vector2::new(2.0, -1.0);
        for i in 0..3 {
            let ui = Vector2::new(u[2 * i], u[2 * i + 1]);
            v += ui * 0.2;
            assert_relative_eq!(vals[i], ui.norm_squared() - 100.0, epsilon = 1e-9);
            assert_relative_eq!(vals[3 + i], v.norm_squared() - 900.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn upsilon_contains_r_block() {
        let (sm, params) = fixture(vec![1, 1, 1]);
        let p = build_problem(&sm, &params).unwrap();
        let mut rest = p.objective.p.clone();
        for i in 0..3 {
            let mut b = rest.view_mut((2 * i, 2 * i), (2, 2));
            b -= Matrix2::identity();
        }
        let min_eig = rest.symmetric_eigen().eigenvalues.min();
        assert!(min_eig >= -1e-9);
    }

    #[test]
    fn delta_count_checked() {
        let (sm, params) = fixture(vec![1]);
        assert!(build_problem(&sm, &params).is_err());
    }
}
