//! Verification suite: each check compares a fast path of the library
//! against an independent reference from [`crate::oracle`], or checks a
//! closed-loop property of the simulator.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Matrix4, Vector2, Vector4};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::baselines::{lqr_schedule, riccati_step};
use crate::beamforming::{
    comm_centric_w, g_star, gamma_lower, gamma_star, lemma1_check, sensing_centric_w, FeasibilityInputs,
    BOUNDARY_TOLERANCE,
};
use crate::config::{load_config, InitMode, Scenario, ScenarioConfig};
use crate::dynamics::{build_transition, MotionState};
use crate::error::{Error, Result};
use crate::estimator::measurement_jacobian;
use crate::mpc::{build_problem, build_stacked, expected_d4, solve, ConstraintParams, MpcProblem, SolveStatus};
use crate::oracle::{
    central_difference_jacobian, grid_search_single_step, maximize_constrained_gain, monte_carlo_d4, scalar_dare,
    BeamSearch, GridSearch,
};
use crate::rf::{distance, noiseless_measurement, steering_vector, Beamformer, CVector};
use crate::simkit::{run_episode, run_monte_carlo, trace_to_string, ControllerKind, TrialMetrics};

/// Outcome of one numbered check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {}. {}: {} ({:.1} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.seconds
        )
    }
}

pub const CHECK_NAMES: [&str; 11] = [
    "jacobian fidelity",
    "fourth moment",
    "beamforming optimality",
    "feasibility equivalence",
    "sensing gain bound",
    "convexity",
    "solver correctness",
    "riccati",
    "rate satisfaction",
    "tracking ordering",
    "determinism",
];

/// Named groups of checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Jacobian,
    Moments,
    Beamforming,
    Lemmas,
    Convexity,
    Solver,
    Riccati,
    ClosedLoop,
    Determinism,
    /// Checks 1 to 8, which need no closed-loop simulation.
    Oracles,
    All,
}

impl Suite {
    pub const ALL: [Suite; 11] = [
        Suite::Jacobian,
        Suite::Moments,
        Suite::Beamforming,
        Suite::Lemmas,
        Suite::Convexity,
        Suite::Solver,
        Suite::Riccati,
        Suite::ClosedLoop,
        Suite::Determinism,
        Suite::Oracles,
        Suite::All,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Jacobian => "jacobian",
            Suite::Moments => "moments",
            Suite::Beamforming => "beamforming",
            Suite::Lemmas => "lemmas",
            Suite::Convexity => "convexity",
            Suite::Solver => "solver",
            Suite::Riccati => "riccati",
            Suite::ClosedLoop => "closed-loop",
            Suite::Determinism => "determinism",
            Suite::Oracles => "oracles",
            Suite::All => "all",
        }
    }

    pub fn checks(self) -> Vec<u8> {
        match self {
            Suite::Jacobian => vec![1],
            Suite::Moments => vec![2],
            Suite::Beamforming => vec![3],
            Suite::Lemmas => vec![4, 5],
            Suite::Convexity => vec![6],
            Suite::Solver => vec![7],
            Suite::Riccati => vec![8],
            Suite::ClosedLoop => vec![9, 10],
            Suite::Determinism => vec![11],
            Suite::Oracles => (1..=8).collect(),
            Suite::All => (1..=11).collect(),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL.into_iter().find(|x| x.as_str() == s.to_ascii_lowercase()).ok_or_else(|| {
            let names: Vec<_> = Suite::ALL.iter().map(|x| x.as_str()).collect();
            Error::InvalidArgument(format!("unknown suite `{s}`; expected one of {}", names.join(", ")))
        })
    }
}

/// Inputs shared by all checks.
#[derive(Debug, Clone)]
pub struct VerifyOptions {
    /// Scenario for the checks that need physical constants and the closed-loop runs.
    pub config: ScenarioConfig,
    pub seed: u64,
    /// Trials per controller and initialization in the closed-loop checks.
    pub trials: usize,
}

impl VerifyOptions {
    pub fn case2() -> Result<Self> {
        Ok(Self { config: load_config::<&str>(None, Some("case2"), &[])?, seed: 1, trials: 20 })
    }
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn uniform2(r: &mut ChaCha8Rng, lo: f64, hi: f64) -> Vector2<f64> {
    Vector2::new(r.random_range(lo..hi), r.random_range(lo..hi))
}

fn random_beam(r: &mut ChaCha8Rng, len: usize, power: f64) -> Beamformer {
    let w = CVector::from_fn(len, |_, _| Complex64::new(r.sample(StandardNormal), r.sample(StandardNormal)));
    let scale = (power / w.norm_squared()).sqrt();
    Beamformer::new(w * Complex64::from(scale))
}

fn random_psd(r: &mut ChaCha8Rng, scale: [f64; 4]) -> Matrix4<f64> {
    let b = Matrix4::from_fn(|i, _| r.sample::<f64, _>(StandardNormal) * scale[i].sqrt());
    b * b.transpose() * 0.25
}

fn check_jacobian(sc: &Scenario, seed: u64) -> Result<(bool, String)> {
    let mut r = rng(seed, 1);
    let mut worst = 0.0f64;
    let cases = 200;
    for _ in 0..cases {
        let uav = MotionState { p: uniform2(&mut r, -300.0, 300.0), v: uniform2(&mut r, -20.0, 20.0) };
        let s_check = Vector4::new(
            r.random_range(-300.0..300.0),
            r.random_range(-300.0..300.0),
            r.random_range(-5.0..5.0),
            r.random_range(-5.0..5.0),
        );
        let w = random_beam(&mut r, sc.geometry.tx_count(), sc.power);
        let analytic = measurement_jacobian(&s_check, &uav, &w, &sc.rf, &sc.geometry)?;
        let f = |x: &DVector<f64>| {
            let target = MotionState::new(x[0], x[1], x[2], x[3]);
            noiseless_measurement(&uav, &target, &w, &sc.rf, &sc.geometry).expect("nondegenerate geometry")
        };
        let x = DVector::from_column_slice(s_check.as_slice());
        let numeric = central_difference_jacobian(f, &x, 1e-6);
        // Compare range, Doppler and echo rows separately; their scales differ by orders of magnitude.
        let rows = analytic.nrows();
        for (start, len) in [(0, 1), (1, 1), (2, rows - 2)] {
            let a = analytic.rows(start, len);
            let n = numeric.rows(start, len);
            let err = (a - n).norm() / a.norm().max(f64::MIN_POSITIVE);
            worst = worst.max(err);
        }
    }
    Ok((worst < 1e-5, format!("{cases} geometries, worst relative error {worst:.2e}")))
}

fn check_fourth_moment(sc: &Scenario, seed: u64) -> Result<(bool, String)> {
    let mut r = rng(seed, 2);
    let mut worst = 0.0f64;
    let cases = 20;
    for case in 0..cases {
        let horizon = r.random_range(1..=5usize);
        let i = r.random_range(1..=horizon);
        let e_hat = Vector4::new(
            r.random_range(-30.0..30.0),
            r.random_range(-30.0..30.0),
            r.random_range(-3.0..3.0),
            r.random_range(-3.0..3.0),
        );
        let m_hat = random_psd(&mut r, [100.0, 100.0, 1.0, 1.0]);
        let sm = build_stacked(&e_hat, &Vector4::zeros(), &m_hat, &sc.model, horizon, &sc.q, &sc.r)?;
        let u = DVector::from_fn(2 * horizon, |_, _| r.random_range(-3.0..3.0));
        let exact = expected_d4(&sm, &u, i, sc.rf.altitude);
        let mc = monte_carlo_d4(&sm, &u, i, sc.rf.altitude, 1_000_000, seed.wrapping_add(case));
        worst = worst.max((exact - mc.mean).abs() / mc.std_err);
    }
    Ok((worst <= 5.0, format!("{cases} instances, worst deviation {worst:.2} standard errors")))
}

fn random_inputs(r: &mut ChaCha8Rng, counts: (usize, usize), altitude: f64, power: f64) -> Result<FeasibilityInputs> {
    let p_uav = uniform2(r, -200.0, 200.0);
    let a_target = steering_vector(&p_uav, &uniform2(r, -400.0, 400.0), altitude, counts)?;
    let p_gu = uniform2(r, -400.0, 400.0);
    let a_gu = steering_vector(&p_uav, &p_gu, altitude, counts)?;
    let gamma = (counts.0 * counts.1) as f64 * power;
    let d_gu = distance(&p_uav, &p_gu, altitude);
    Ok(FeasibilityInputs {
        a_target,
        a_gu,
        d_gu,
        gamma,
        eta: r.random_range(0.02..1.5) * gamma / (d_gu * d_gu),
        gamma_d: r.random_range(0.02..1.5) * gamma,
        delta: 1,
        rate_threshold: 2.5,
    })
}

fn check_beamforming(sc: &Scenario, seed: u64) -> Result<(bool, String)> {
    let mut r = rng(seed, 3);
    let power = sc.power;
    // Closed form vs search, and the returned beam vs its own optimal value.
    let mut worst_search = 0.0f64;
    let mut worst_beam = 0.0f64;
    let mut cases = 0;
    for counts in [(2, 2), (4, 4)] {
        let mut done = 0;
        while done < 200 {
            let inputs = random_inputs(&mut r, counts, sc.rf.altitude, power)?;
            let search = BeamSearch { seed: r.random(), ..BeamSearch::default() };
            let required = inputs.rate_gain_required();
            if required <= inputs.gamma {
                let closed = gamma_star(&inputs)?;
                let w = sensing_centric_w(&inputs)?;
                let oracle = maximize_constrained_gain(&inputs.a_target, &inputs.a_gu, required, power, search)
                    .ok_or_else(|| Error::NumericalFailure("search found no feasible beam".into()))?;
                worst_search = worst_search.max((closed - oracle.gain).abs());
                worst_beam = worst_beam.max((closed - w.gain_toward(&inputs.a_target)).abs());
                done += 1;
            }
            if inputs.gamma_d <= inputs.gamma {
                let closed = g_star(&inputs)?;
                let (w, _) = comm_centric_w(&inputs)?;
                let oracle = maximize_constrained_gain(&inputs.a_gu, &inputs.a_target, inputs.gamma_d, power, search)
                    .ok_or_else(|| Error::NumericalFailure("search found no feasible beam".into()))?;
                worst_search = worst_search.max((closed - oracle.gain).abs());
                worst_beam = worst_beam.max((closed - w.gain_toward(&inputs.a_gu)).abs());
            }
        }
        cases += done;
    }
    Ok((
        worst_search < 1e-6 && worst_beam < 1e-6,
        format!(
            "{cases} instances at M_t = 4 and 16, worst gap to search {worst_search:.2e}, worst beam vs closed value {worst_beam:.2e}"
        ),
    ))
}

fn check_feasibility_equivalence(sc: &Scenario, seed: u64) -> Result<(bool, String)> {
    let mut r = rng(seed, 4);
    let cases = 2000;
    let mut disagree = 0;
    let mut feasible = 0;
    for k in 0..cases {
        let counts = if k % 2 == 0 { (4, 4) } else { (2, 2) };
        let inputs = random_inputs(&mut r, counts, sc.rf.altitude, sc.power)?;
        let flags = lemma1_check(&inputs)?;
        disagree += usize::from(flags.sensing_feasible != flags.comm_feasible);
        feasible += usize::from(flags.sensing_feasible);
    }
    Ok((
        disagree == 0,
        format!(
            "{cases} instances ({feasible} feasible), {disagree} disagreements at boundary band {BOUNDARY_TOLERANCE:e}"
        ),
    ))
}

fn check_gain_bound(sc: &Scenario, seed: u64) -> Result<(bool, String)> {
    let mut r = rng(seed, 5);
    let mut bound_violations = 0;
    let mut checked = 0;
    while checked < 1000 {
        let counts = if checked % 2 == 0 { (4, 4) } else { (2, 2) };
        let inputs = random_inputs(&mut r, counts, sc.rf.altitude, sc.power)?;
        if inputs.rate_gain_required() > inputs.gamma {
            continue;
        }
        let star = gamma_star(&inputs)?;
        if gamma_lower(&inputs) > star + 1e-12 * inputs.gamma {
            bound_violations += 1;
        }
        checked += 1;
    }

    // Fixed misaligned geometry, growing square arrays at fixed per-antenna power.
    // The UAV sits close enough to the GU that the rate is reachable with four antennas.
    let p_uav = Vector2::new(200.0, 100.0);
    let p_pred = Vector2::new(120.0, 220.0);
    let d_gu = distance(&p_uav, &sc.p_gu, sc.rf.altitude);
    let mut gaps = Vec::new();
    for side in [2usize, 4, 8, 16] {
        let inputs = FeasibilityInputs {
            a_target: steering_vector(&p_uav, &p_pred, sc.rf.altitude, (side, side))?,
            a_gu: steering_vector(&p_uav, &sc.p_gu, sc.rf.altitude, (side, side))?,
            d_gu,
            gamma: (side * side) as f64 * sc.power,
            eta: sc.eta,
            gamma_d: 0.0,
            delta: 1,
            rate_threshold: sc.rate_threshold,
        };
        gaps.push(gamma_star(&inputs)? - gamma_lower(&inputs));
    }
    let monotone = gaps.windows(2).all(|g| g[1] <= g[0] + 1e-12);

    // Predicted target on the ground user.
    let a = steering_vector(&p_uav, &sc.p_gu, sc.rf.altitude, sc.geometry.tx)?;
    let aligned = FeasibilityInputs {
        a_target: a.clone(),
        a_gu: a,
        d_gu,
        gamma: sc.gamma,
        eta: sc.eta,
        gamma_d: 0.0,
        delta: 0,
        rate_threshold: sc.rate_threshold,
    };
    let exact = gamma_star(&aligned)? == gamma_lower(&aligned);
    let gap_text: Vec<String> = gaps.iter().map(|g| format!("{g:.4}")).collect();
    Ok((
        bound_violations == 0 && monotone && exact,
        format!(
            "{checked} instances with {bound_violations} bound violations; gap over M_t = 4, 16, 64, 256: [{}]; aligned case exact: {exact}",
            gap_text.join(", ")
        ),
    ))
}

fn random_params(r: &mut ChaCha8Rng, sc: &Scenario, horizon: usize) -> ConstraintParams {
    ConstraintParams {
        gamma_th: sc.gamma_th * 10f64.powf(r.random_range(-1.0..2.0)),
        eta: sc.eta,
        gamma: sc.gamma,
        altitude: sc.rf.altitude,
        p_gu: sc.p_gu,
        deltas: (0..horizon).map(|_| u8::from(r.random_bool(0.9))).collect(),
        a_max: r.random_range(0.5..10.0),
        v_max: r.random_range(3.0..30.0),
    }
}

/// Random single-slot instance around a UAV flying below its speed limit.
fn random_problem(r: &mut ChaCha8Rng, sc: &Scenario, horizon: usize) -> Result<MpcProblem> {
    let params = random_params(r, sc, horizon);
    let speed = r.random_range(0.0..0.95) * params.v_max;
    let heading = r.random_range(0.0..std::f64::consts::TAU);
    let s_uav = Vector4::new(
        r.random_range(-100.0..100.0),
        r.random_range(0.0..300.0),
        speed * heading.cos(),
        speed * heading.sin(),
    );
    let e_hat = Vector4::new(
        r.random_range(-60.0..60.0),
        r.random_range(-60.0..60.0),
        r.random_range(-5.0..5.0),
        r.random_range(-5.0..5.0),
    );
    let m_hat = random_psd(r, [4.0, 4.0, 0.1, 0.1]);
    let sm = build_stacked(&e_hat, &s_uav, &m_hat, &sc.model, horizon, &sc.q, &sc.r)?;
    build_problem(&sm, &params)
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}

fn check_convexity(sc: &Scenario, seed: u64) -> Result<(bool, String)> {
    let mut r = rng(seed, 6);
    let instances = 20;
    let points = 100;
    let mut worst = f64::INFINITY;
    for _ in 0..instances {
        let horizon = r.random_range(1..=5usize);
        let p = random_problem(&mut r, sc, horizon)?;
        worst = worst.min(min_eigenvalue(&p.objective.hessian()));
        for c in &p.motion {
            worst = worst.min(min_eigenvalue(&c.hessian()));
        }
        for _ in 0..points {
            let u = DVector::from_fn(p.dim(), |_, _| r.random_range(-20.0..20.0));
            for c in &p.sensing {
                worst = worst.min(min_eigenvalue(&c.hessian(&u)));
            }
        }
    }
    Ok((worst >= -1e-8, format!("{instances} instances x {points} points, smallest Hessian eigenvalue {worst:.3e}")))
}

fn check_solver(sc: &Scenario, seed: u64) -> Result<(bool, String)> {
    let mut r = rng(seed, 7);
    let mut opts = sc.solver.clone();
    opts.soft_mode = false;

    let mut compared = 0;
    let mut worst_u = 0.0f64;
    let mut worst_obj = 0.0f64;
    let mut worst_kkt = 0.0f64;
    let mut attempts = 0;
    while compared < 40 && attempts < 400 {
        attempts += 1;
        let p = random_problem(&mut r, sc, 1)?;
        let sol = match solve(&p, &opts) {
            Ok(s) if s.status == SolveStatus::Optimal => s,
            _ => continue,
        };
        let Some((u_grid, j_grid)) = grid_search_single_step(&p, GridSearch::default()) else {
            continue;
        };
        worst_u = worst_u.max((&sol.u_hat - u_grid).norm());
        worst_obj = worst_obj.max((sol.objective - j_grid) / j_grid.abs().max(1.0));
        worst_kkt = worst_kkt.max(sol.kkt_residual);
        compared += 1;
    }

    let mut worst_free = 0.0f64;
    for _ in 0..20 {
        let horizon = r.random_range(1..=5usize);
        let n = 2 * horizon;
        let b = DMatrix::from_fn(n, n, |_, _| r.sample::<f64, _>(StandardNormal));
        let upsilon = &b * b.transpose() + DMatrix::identity(n, n);
        let g = DVector::from_fn(n, |_, _| r.random_range(-5.0..5.0));
        let p =
            MpcProblem::motion_only(upsilon.clone(), g.clone(), 0.0, Vector2::zeros(), sc.model.dt, 1e6, 1e6, horizon)?;
        let sol = solve(&p, &opts)?;
        let exact = -upsilon.lu().solve(&g).expect("positive definite");
        worst_free = worst_free.max((&sol.u_hat - &exact).norm() / exact.norm().max(1.0));
        worst_kkt = worst_kkt.max(sol.kkt_residual);
    }
    let passed = compared >= 20 && worst_u <= 2e-3 && worst_obj <= 1e-5 && worst_free <= 1e-8 && worst_kkt < 1e-6;
    Ok((
        passed,
        format!(
            "{compared} grid comparisons (control gap {worst_u:.2e}, objective gap {worst_obj:.2e}); unconstrained gap {worst_free:.2e}; worst KKT residual {worst_kkt:.2e}"
        ),
    ))
}

fn check_riccati(sc: &Scenario, seed: u64) -> Result<(bool, String)> {
    let one = DMatrix::from_element(1, 1, 1.0);
    let mut p = one.clone();
    for _ in 0..200 {
        p = riccati_step(&one, &one, &one, &one, &p)?.1;
    }
    let golden = (1.0 + 5f64.sqrt()) / 2.0;
    let dare_err = (p[(0, 0)] - golden).abs();
    let oracle_err = (scalar_dare(1.0, 1.0, 1.0, 1.0, 1.0, 200) - p[(0, 0)]).abs();

    // Noise-free model: the full-horizon program and backward recursion solve the same problem.
    let mut r = rng(seed, 8);
    let model = build_transition(sc.model.dt, [0.0; 4])?;
    let mut worst = 0.0f64;
    for horizon in [1usize, 3, 5, 10, 20] {
        let e0 = Vector4::new(
            r.random_range(-20.0..20.0),
            r.random_range(-20.0..20.0),
            r.random_range(-2.0..2.0),
            r.random_range(-2.0..2.0),
        );
        let sm = build_stacked(&e0, &Vector4::zeros(), &Matrix4::zeros(), &model, horizon, &sc.q, &sc.r)?;
        let params = ConstraintParams {
            gamma_th: 0.0,
            eta: sc.eta,
            gamma: sc.gamma,
            altitude: sc.rf.altitude,
            p_gu: sc.p_gu,
            deltas: vec![0; horizon],
            a_max: 1e6,
            v_max: 1e6,
        };
        let full = build_problem(&sm, &params)?;
        let p = MpcProblem::motion_only(
            full.objective.p.clone(),
            full.objective.q.clone(),
            full.objective.r,
            Vector2::zeros(),
            model.dt,
            1e6,
            1e6,
            horizon,
        )?;
        let mpc_cost = solve(&p, &sc.solver)?.objective;
        let schedule = lqr_schedule(&model, &sc.q, &sc.r, horizon + 1)?;
        let mut e = e0;
        let mut lqr_cost = 0.0;
        for k in 1..=horizon {
            let gain = schedule.gain(k);
            let u = -(gain * DVector::from_column_slice(e.as_slice()));
            let u = Vector2::new(u[0], u[1]);
            e = model.a * e + model.b * u;
            lqr_cost += (e.transpose() * sc.q * e)[0] + (u.transpose() * sc.r * u)[0];
        }
        worst = worst.max((mpc_cost - lqr_cost).abs() / lqr_cost.abs().max(1.0));
    }
    Ok((
        dare_err < 1e-9 && oracle_err < 1e-9 && worst < 1e-6,
        format!("fixed point error {dare_err:.2e}; LQR vs full-horizon program relative cost gap {worst:.2e}"),
    ))
}

/// Monte Carlo metrics for every controller under both initializations.
#[derive(Debug, Clone)]
pub struct ClosedLoopStudy {
    pub runs: Vec<(InitMode, ControllerKind, TrialMetrics)>,
    pub seconds: f64,
}

impl ClosedLoopStudy {
    pub fn run(opts: &VerifyOptions) -> Result<Self> {
        let start = Instant::now();
        let mut runs = Vec::new();
        for init in [InitMode::Accurate, InitMode::Inaccurate] {
            let mut cfg = opts.config.clone();
            cfg.scenario.init = init;
            let sc = cfg.resolve()?;
            for c in ControllerKind::ALL {
                runs.push((init, c, run_monte_carlo(&sc, c, opts.trials, opts.seed)?));
            }
        }
        Ok(Self { runs, seconds: start.elapsed().as_secs_f64() })
    }

    pub fn metrics(&self, init: InitMode, controller: ControllerKind) -> &TrialMetrics {
        &self.runs.iter().find(|(i, c, _)| *i == init && *c == controller).expect("every pair is run").2
    }
}

fn check_rate_satisfaction(study: &ClosedLoopStudy) -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for init in [InitMode::Accurate, InitMode::Inaccurate] {
        for c in [ControllerKind::Iscc, ControllerKind::Noncausal] {
            let f = study.metrics(init, c).min_fraction_optimal();
            ok &= f == 1.0;
            parts.push(format!("{c}/{}: {f:.4}", init.as_str()));
        }
    }
    let lqg = study.metrics(InitMode::Inaccurate, ControllerKind::Lqg);
    let lqg_ok = lqg.min_fraction < 1.0;
    parts.push(format!("lqg/inaccurate min over trials: {:.4}", lqg.min_fraction));
    let fast = study.seconds < 180.0;
    parts.push(format!("study {:.0} s", study.seconds));
    (ok && lqg_ok && fast, parts.join("; "))
}

fn check_tracking_ordering(study: &ClosedLoopStudy) -> (bool, String) {
    let iscc = study.metrics(InitMode::Inaccurate, ControllerKind::Iscc);
    let lqg = study.metrics(InitMode::Inaccurate, ControllerKind::Lqg);
    let nc = study.metrics(InitMode::Inaccurate, ControllerKind::Noncausal);
    let last = iscc.slots() - 1;
    let beats = |a: &[f64], b: &[f64]| a[last] < b[last];
    let ordered =
        beats(&iscc.rms_e, &lqg.rms_e) && beats(&iscc.rmse_p, &lqg.rmse_p) && beats(&iscc.rmse_v, &lqg.rmse_v);
    let from = iscc.slots() * 3 / 4;
    let worst_ratio = (from..iscc.slots()).map(|k| iscc.rms_e[k] / nc.rms_e[k]).fold(0.0f64, f64::max);
    (
        ordered && worst_ratio <= 2.0,
        format!(
            "end of horizon ISCC vs LQG: rms_e {:.3}/{:.3}, rmse_p {:.3}/{:.3}, rmse_v {:.3}/{:.3}; worst ISCC/non-causal ratio over final quarter {worst_ratio:.2}",
            iscc.rms_e[last], lqg.rms_e[last], iscc.rmse_p[last], lqg.rmse_p[last], iscc.rmse_v[last], lqg.rmse_v[last]
        ),
    )
}

fn check_determinism(sc: &Scenario, seed: u64) -> Result<(bool, String)> {
    let mut identical = 0;
    for c in ControllerKind::ALL {
        let a = trace_to_string(&run_episode(sc, c, seed)?)?;
        let b = trace_to_string(&run_episode(sc, c, seed)?)?;
        identical += usize::from(a == b);
    }
    Ok((
        identical == ControllerKind::ALL.len(),
        format!("{identical} of {} controllers reproduce byte-identical traces", ControllerKind::ALL.len()),
    ))
}

/// Runs the requested checks in order. Errors inside a check count as failures.
pub fn run_checks(
    ids: &[u8],
    opts: &VerifyOptions,
    mut report: impl FnMut(&CheckOutcome),
) -> Result<Vec<CheckOutcome>> {
    let sc = opts.config.resolve()?;
    let mut study: Option<ClosedLoopStudy> = None;
    let mut out = Vec::with_capacity(ids.len());
    for &id in ids {
        let name = *CHECK_NAMES
            .get(usize::from(id).wrapping_sub(1))
            .ok_or_else(|| Error::InvalidArgument(format!("no check numbered {id}")))?;
        let start = Instant::now();
        let result = match id {
            1 => check_jacobian(&sc, opts.seed),
            2 => check_fourth_moment(&sc, opts.seed),
            3 => check_beamforming(&sc, opts.seed),
            4 => check_feasibility_equivalence(&sc, opts.seed),
            5 => check_gain_bound(&sc, opts.seed),
            6 => check_convexity(&sc, opts.seed),
            7 => check_solver(&sc, opts.seed),
            8 => check_riccati(&sc, opts.seed),
            9 | 10 => {
                if study.is_none() {
                    study = Some(ClosedLoopStudy::run(opts)?);
                }
                let s = study.as_ref().expect("just computed");
                Ok(if id == 9 { check_rate_satisfaction(s) } else { check_tracking_ordering(s) })
            }
            _ => check_determinism(&sc, opts.seed),
        };
        let (passed, detail) = result.unwrap_or_else(|e| (false, format!("error: {e}")));
        let outcome = CheckOutcome { id, name, passed, detail, seconds: start.elapsed().as_secs_f64() };
        report(&outcome);
        out.push(outcome);
    }
    Ok(out)
}
