//! Stacked horizon model: every predicted tracking error over the horizon
//! written as an affine map of the stacked control vector plus Gaussian noise.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4, Vector4};

use crate::dynamics::TransitionModel;
use crate::error::{Error, Result};

/// Data for one horizon step `i`, with `e_{n+i} = Lambda_i (u_bar_i + n_bar_i)`.
#[derive(Debug, Clone)]
pub struct HorizonStep {
    /// `[A^i, A^{i-1}, ..., A, I]`, 4 x (4 + 4i).
    pub lambda: DMatrix<f64>,
    /// Maps the stacked controls to `[0; B u_n; ...; B u_{n+i-1}]`, (4 + 4i) x 2N0.
    pub select: DMatrix<f64>,
    /// `[e_hat; 0]`
    pub c_bar: DVector<f64>,
    /// `[s_uav; 0]`
    pub c_tilde: DVector<f64>,
    /// `blkdiag(M_hat, Qs, ..., Qs)`
    pub n_bar: DMatrix<f64>,
    /// `Lambda^T Q Lambda`
    pub lambda_q: DMatrix<f64>,
    /// `Lambda^T C^T C Lambda`
    pub lambda_c: DMatrix<f64>,
}

impl HorizonStep {
    /// Horizontal-position rows of `Lambda_i`, i.e. `C Lambda_i`.
    pub fn c_lambda(&self) -> DMatrix<f64> {
        self.lambda.rows(0, 2).into_owned()
    }

    /// `u_bar_i = S_i u_hat + c_bar_i`
    pub fn u_bar(&self, u_hat: &DVector<f64>) -> DVector<f64> {
        &self.select * u_hat + &self.c_bar
    }

    /// `u_tilde_i = S_i u_hat + c_tilde_i`
    pub fn u_tilde(&self, u_hat: &DVector<f64>) -> DVector<f64> {
        &self.select * u_hat + &self.c_tilde
    }

    /// Mean of the predicted tracking error.
    pub fn error_mean(&self, u_hat: &DVector<f64>) -> DVector<f64> {
        &self.lambda * self.u_bar(u_hat)
    }

    /// Covariance of the predicted tracking error.
    pub fn error_cov(&self) -> DMatrix<f64> {
        &self.lambda * &self.n_bar * self.lambda.transpose()
    }
}

#[derive(Debug, Clone)]
pub struct StackedModel {
    pub steps: Vec<HorizonStep>,
    pub horizon: usize,
    pub r: Matrix2<f64>,
    pub s_uav: Vector4<f64>,
    pub dt: f64,
}

impl StackedModel {
    /// Step `i` in `1..=horizon`.
    pub fn step(&self, i: usize) -> &HorizonStep {
        &self.steps[i - 1]
    }

    pub fn dim(&self) -> usize {
        2 * self.horizon
    }
}

fn is_psd(m: &Matrix4<f64>) -> bool {
    let sym = (m + m.transpose()) * 0.5;
    let scale = sym.abs().max().max(1.0);
    (m - m.transpose()).abs().max() <= 1e-9 * scale && sym.symmetric_eigenvalues().iter().all(|&l| l >= -1e-9 * scale)
}

/// Assembles the stacked model around the posterior tracking error `e_hat`.
pub fn build_stacked(
    e_hat: &Vector4<f64>,
    s_uav: &Vector4<f64>,
    m_hat: &Matrix4<f64>,
    model: &TransitionModel,
    horizon: usize,
    q: &Matrix4<f64>,
    r: &Matrix2<f64>,
) -> Result<StackedModel> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    if !is_psd(m_hat) {
        return Err(Error::InvalidArgument("posterior covariance must be symmetric PSD".into()));
    }
    let n_u = 2 * horizon;
    let steps = (1..=horizon)
        .map(|i| {
            let cols = 4 + 4 * i;
            let mut lambda = DMatrix::zeros(4, cols);
            for k in 0..=i {
                lambda.fixed_view_mut::<4, 4>(0, 4 * k).copy_from(&model.a_power(i - k));
            }
            let mut select = DMatrix::zeros(cols, n_u);
            for j in 0..i {
                select.fixed_view_mut::<4, 2>(4 + 4 * j, 2 * j).copy_from(&model.b);
            }
            let mut c_bar = DVector::zeros(cols);
            c_bar.fixed_rows_mut::<4>(0).copy_from(e_hat);
            let mut c_tilde = DVector::zeros(cols);
            c_tilde.fixed_rows_mut::<4>(0).copy_from(s_uav);
            let mut n_bar = DMatrix::zeros(cols, cols);
            n_bar.fixed_view_mut::<4, 4>(0, 0).copy_from(m_hat);
            for j in 1..=i {
                n_bar.fixed_view_mut::<4, 4>(4 * j, 4 * j).copy_from(&model.qs);
            }
            let q_dyn = DMatrix::from_fn(4, 4, |a, b| q[(a, b)]);
            let lambda_q = lambda.transpose() * q_dyn * &lambda;
            let c_lambda = lambda.rows(0, 2);
            let lambda_c = c_lambda.transpose() * c_lambda;
            HorizonStep { lambda, select, c_bar, c_tilde, n_bar, lambda_q, lambda_c }
        })
        .collect();
    Ok(StackedModel { steps, horizon, r: *r, s_uav: *s_uav, dt: model.dt })
}

/// `E{e_{n+i}^T Q e_{n+i}} = u_bar^T Lambda^q u_bar + Tr(N_bar Lambda^q)`.
pub fn expected_quadratic(sm: &StackedModel, u_hat: &DVector<f64>, i: usize) -> f64 {
    let st = sm.step(i);
    let ub = st.u_bar(u_hat);
    ub.dot(&(&st.lambda_q * &ub)) + (&st.n_bar * &st.lambda_q).trace()
}

/// `E{d^4}` of the UAV-target distance at step `i`, with `d^2 = ||C e||^2 + H^2`.
pub fn expected_d4(sm: &StackedModel, u_hat: &DVector<f64>, i: usize, altitude: f64) -> f64 {
    let st = sm.step(i);
    let ub = st.u_bar(u_hat);
    let lc_ub = &st.lambda_c * &ub;
    let quad = ub.dot(&lc_ub);
    let ln = &st.lambda_c * &st.n_bar;
    let tr = ln.trace();
    let tr_sq = (&ln * &ln).trace();
    let cross = lc_ub.dot(&(&st.n_bar * &lc_ub));
    let h2 = altitude * altitude;
    quad * quad + 4.0 * cross + 2.0 * quad * tr + tr * tr + 2.0 * tr_sq + 2.0 * h2 * (quad + tr) + h2 * h2
}
