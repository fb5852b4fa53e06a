use isctrack_core::baselines::{lqr_schedule, noncausal_mpc, MotionBounds};
use isctrack_core::beamforming::{gamma_lower, gamma_star, lemma1_check, sensing_centric_w, FeasibilityInputs};
use isctrack_core::mpc::{
    build_problem, build_stacked, expected_quadratic, solve, ConstraintParams, MpcProblem, SolveStatus, SolverOptions,
};
use isctrack_core::oracle::propagate_error;
use isctrack_core::rf::{achievable_rate, distance, steering_vector, Beamformer, RfConstants};
use isctrack_core::{build_transition, ArrayGeometry, ErrorState, MotionState, TransitionModel};
use nalgebra::{DMatrix, DVector, Matrix2, Matrix4, Vector2, Vector4};
use num_complex::Complex64;
use proptest::prelude::*;

fn model() -> TransitionModel {
    build_transition(0.2, [4e-4, 4e-4, 0.01, 0.01]).unwrap()
}

fn rf() -> RfConstants {
    RfConstants::new(1e-6, 30e9, 299_792_458.0, 1.0, 1e-11, 1e-11, 1e3, 20.0, 100.0, 50.0).unwrap()
}

fn vec2(range: f64) -> impl Strategy<Value = Vector2<f64>> {
    (-range..range, -range..range).prop_map(|(x, y)| Vector2::new(x, y))
}

fn vec4(p: f64, v: f64) -> impl Strategy<Value = Vector4<f64>> {
    (-p..p, -p..p, -v..v, -v..v).prop_map(|(a, b, c, d)| Vector4::new(a, b, c, d))
}

fn diag_psd() -> impl Strategy<Value = Matrix4<f64>> {
    (0.0..50.0, 0.0..50.0, 0.0..2.0, 0.0..2.0)
        .prop_map(|(a, b, c, d)| Matrix4::from_diagonal(&Vector4::new(a, b, c, d)))
}

/// `max_rate` scales the rate requirement relative to full-power MRT; above 1 it can be unreachable.
fn feasibility_inputs(max_rate: f64) -> impl Strategy<Value = FeasibilityInputs> {
    (vec2(200.0), vec2(400.0), vec2(400.0), 0.05..max_rate, 0.05..1.4f64).prop_map(|(u, t, g, r, s)| {
        let a_target = steering_vector(&u, &t, 50.0, (4, 4)).unwrap();
        let a_gu = steering_vector(&u, &g, 50.0, (4, 4)).unwrap();
        let d_gu = distance(&u, &g, 50.0);
        FeasibilityInputs {
            a_target,
            a_gu,
            d_gu,
            gamma: 16.0,
            eta: r * 16.0 / (d_gu * d_gu),
            gamma_d: s * 16.0,
            delta: 1,
            rate_threshold: 2.5,
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rate_is_invariant_to_a_global_beam_phase(u in vec2(300.0), g in vec2(300.0), phase in 0.0..6.3f64) {
        let geom = ArrayGeometry::new((4, 4), (4, 4)).unwrap();
        let a = steering_vector(&u, &(u + Vector2::new(30.0, -20.0)), 50.0, geom.tx).unwrap();
        let w = Beamformer::mrt(&a, 1.0);
        let rotated = Beamformer::new(&w.w * Complex64::from_polar(1.0, phase));
        let r1 = achievable_rate(&u, &g, &w, &rf(), &geom).unwrap();
        let r2 = achievable_rate(&u, &g, &rotated, &rf(), &geom).unwrap();
        prop_assert!((r1 - r2).abs() <= 1e-12 * r1.max(1.0));
    }

    #[test]
    fn error_dynamics_match_the_difference_of_states(
        uav in vec4(300.0, 20.0), tgt in vec4(300.0, 5.0), u in vec2(10.0), noise in vec4(0.1, 0.3)
    ) {
        let m = model();
        let su = MotionState::from_vector(&uav);
        let st = MotionState::from_vector(&tgt);
        let direct = m.step_error(&ErrorState::between(&su, &st), &u, &noise);
        let via_states = ErrorState::between(&m.step_uav(&su, &u), &m.step_target(&st, &noise));
        prop_assert!((direct.0 - via_states.0).norm() < 1e-9);
    }

    #[test]
    fn lower_bound_never_exceeds_the_optimal_sensing_gain(inputs in feasibility_inputs(1.0)) {
        prop_assume!(inputs.rate_gain_required() <= inputs.gamma);
        let star = gamma_star(&inputs).unwrap();
        prop_assert!(gamma_lower(&inputs) <= star + 1e-12 * inputs.gamma);
        let w = sensing_centric_w(&inputs).unwrap();
        prop_assert!(w.power() <= inputs.power() * (1.0 + 1e-12));
        prop_assert!(w.gain_toward(&inputs.a_gu) >= inputs.rate_gain_required() * (1.0 - 1e-9));
    }

    #[test]
    fn feasibility_flags_agree(inputs in feasibility_inputs(1.4)) {
        let flags = lemma1_check(&inputs).unwrap();
        prop_assert_eq!(flags.sensing_feasible, flags.comm_feasible);
    }

    #[test]
    fn stacked_moments_match_step_by_step_propagation(
        e in vec4(50.0, 5.0), m_hat in diag_psd(), horizon in 1usize..6, seed in 0u64..1000
    ) {
        let md = model();
        let sm = build_stacked(&e, &Vector4::zeros(), &m_hat, &md, horizon, &Matrix4::identity(), &Matrix2::identity()).unwrap();
        let u = DVector::from_fn(2 * horizon, |k, _| ((seed as f64 + k as f64) * 0.7).sin() * 3.0);
        let steps = propagate_error(&e, &m_hat, &md, &u);
        for (i, (mean, cov)) in steps.iter().enumerate() {
            let st = sm.step(i + 1);
            let mean_s = st.error_mean(&u);
            let cov_s = st.error_cov();
            for k in 0..4 {
                prop_assert!((mean_s[k] - mean[k]).abs() < 1e-9 * mean.norm().max(1.0));
                for l in 0..4 {
                    prop_assert!((cov_s[(k, l)] - cov[(k, l)]).abs() < 1e-9 * cov.norm().max(1.0));
                }
            }
            let quad = expected_quadratic(&sm, &u, i + 1);
            let direct = mean.dot(mean) + cov.trace();
            prop_assert!((quad - direct).abs() < 1e-9 * direct.max(1.0));
        }
    }

    #[test]
    fn assembled_constraints_are_convex(
        e in vec4(60.0, 5.0), uav in vec4(200.0, 10.0), m_hat in diag_psd(), horizon in 1usize..5,
        gamma_th in 1e-9..1e-6f64, point in prop::collection::vec(-20.0..20.0f64, 8)
    ) {
        let sm = build_stacked(&e, &uav, &m_hat, &model(), horizon, &Matrix4::identity(), &Matrix2::identity()).unwrap();
        let params = ConstraintParams {
            gamma_th, eta: 4.66e-5, gamma: 16.0, altitude: 50.0, p_gu: Vector2::new(300.0, 50.0),
            deltas: vec![1; horizon], a_max: 10.0, v_max: 30.0,
        };
        let p = build_problem(&sm, &params).unwrap();
        let u = DVector::from_column_slice(&point[..2 * horizon]);
        let min_eig = |m: DMatrix<f64>| m.symmetric_eigenvalues().min();
        prop_assert!(min_eig(p.objective.hessian()) >= -1e-8);
        for c in &p.sensing {
            prop_assert!(min_eig(c.hessian(&u)) >= -1e-8);
        }
    }

    #[test]
    fn optimal_solutions_are_feasible(
        diag in prop::collection::vec(0.5..5.0f64, 4), g in prop::collection::vec(-80.0..80.0f64, 4),
        v in vec2(20.0), a_max in 0.5..5.0f64
    ) {
        let upsilon = DMatrix::from_diagonal(&DVector::from_vec(diag));
        let p = MpcProblem::motion_only(upsilon, DVector::from_vec(g), 0.0, v, 0.2, a_max, 25.0, 2).unwrap();
        // Inside the speed disk u = 0 is feasible; beyond v_max + a_max dt no first move can recover.
        let (speed, reach) = (v.norm(), 25.0 + a_max * 0.2);
        prop_assume!(speed <= 25.0 || speed > reach);
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        if speed > reach {
            prop_assert_eq!(sol.status, SolveStatus::Infeasible);
        } else {
            prop_assert_eq!(sol.status, SolveStatus::Optimal);
            prop_assert!(p.max_violation(&sol.u_hat) <= 1e-9);
            prop_assert!(sol.kkt_residual < 1e-6);
        }
    }
}

#[test]
fn first_move_matches_the_riccati_gain_without_noise() {
    let md = build_transition(0.2, [0.0; 4]).unwrap();
    let (q, r) = (Matrix4::identity(), Matrix2::identity());
    let e0 = Vector4::new(4.0, -3.0, 0.5, -0.2);
    for horizon in [1, 3, 5, 8] {
        let sm = build_stacked(&e0, &Vector4::zeros(), &Matrix4::zeros(), &md, horizon, &q, &r).unwrap();
        let params = ConstraintParams {
            gamma_th: 0.0,
            eta: 1e-5,
            gamma: 16.0,
            altitude: 50.0,
            p_gu: Vector2::zeros(),
            deltas: vec![0; horizon],
            a_max: 1e6,
            v_max: 1e6,
        };
        let full = build_problem(&sm, &params).unwrap();
        let p = MpcProblem::motion_only(
            full.objective.p,
            full.objective.q,
            full.objective.r,
            Vector2::zeros(),
            0.2,
            1e6,
            1e6,
            horizon,
        )
        .unwrap();
        let u_mpc = solve(&p, &SolverOptions::default()).unwrap().first_control();
        let gain = lqr_schedule(&md, &q, &r, horizon + 1).unwrap();
        let u_lqr = -(gain.gain(1) * DVector::from_column_slice(e0.as_slice()));
        assert!((u_mpc - Vector2::new(u_lqr[0], u_lqr[1])).norm() < 1e-7, "horizon {horizon}");
    }
}

#[test]
fn noncausal_program_equals_the_stacked_program_for_a_known_target() {
    let md = build_transition(0.2, [0.0; 4]).unwrap();
    let (q, r) = (Matrix4::identity(), Matrix2::identity());
    let s_uav = Vector4::new(0.0, 150.0, 1.0, 2.0);
    let s_tgt = Vector4::new(20.0, 300.0, 1.5, -2.0);
    let horizon = 5;
    let future: Vec<Vector4<f64>> = (1..=horizon).map(|i| md.a_power(i) * s_tgt).collect();
    let bounds = MotionBounds { a_max: 3.0, v_max: 10.0 };
    let opts = SolverOptions::default();
    let nc = noncausal_mpc(&future, &s_uav, &md, &q, &r, bounds, &opts).unwrap();

    let sm = build_stacked(&(s_uav - s_tgt), &s_uav, &Matrix4::zeros(), &md, horizon, &q, &r).unwrap();
    let params = ConstraintParams {
        gamma_th: 0.0,
        eta: 1e-5,
        gamma: 16.0,
        altitude: 50.0,
        p_gu: Vector2::zeros(),
        deltas: vec![0; horizon],
        a_max: bounds.a_max,
        v_max: bounds.v_max,
    };
    let full = build_problem(&sm, &params).unwrap();
    let p = MpcProblem::motion_only(
        full.objective.p,
        full.objective.q,
        full.objective.r,
        s_uav.fixed_rows::<2>(2).into(),
        0.2,
        3.0,
        10.0,
        horizon,
    )
    .unwrap();
    let stacked = solve(&p, &opts).unwrap();
    assert!((nc.u_hat - &stacked.u_hat).norm() < 1e-6);
    assert!((nc.objective - stacked.objective).abs() < 1e-6 * stacked.objective.abs().max(1.0));
}
