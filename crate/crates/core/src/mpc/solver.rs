//! Log-barrier interior-point solver with damped Newton centering.
//!
//! A phase-I program with a shared slack finds a strictly feasible start.
//! When the sensing constraints cannot be met, an optional soft mode adds one
//! nonnegative slack per sensing constraint with a linear penalty.

use nalgebra::{DMatrix, DVector, Vector2};
use serde::{Deserialize, Serialize};

use super::problem::MpcProblem;
use crate::error::{Error, Result};

const ARMIJO: f64 = 0.01;
const BACKTRACK: f64 = 0.5;
const MIN_STEP: f64 = 1e-14;
/// Rows whose barrier multiplier (times gradient norm) exceeds this fraction
/// of the objective gradient count as active in the KKT certificate.
const ACTIVE_MULTIPLIER: f64 = 1e-8;

const PURE_NEWTON_DECREMENT: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub max_outer: usize,
    pub max_newton: usize,
    /// Inner stop: `lambda^2 / 2` below this.
    pub newton_tol: f64,
    /// Outer stop: `m / t` below this.
    pub gap_tol: f64,
    pub t_init: f64,
    pub t_growth: f64,
    pub soft_mode: bool,
    /// Linear penalty on each sensing slack in soft mode.
    pub penalty: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_outer: 60,
            max_newton: 100,
            newton_tol: 1e-9,
            gap_tol: 1e-8,
            t_init: 1.0,
            t_growth: 10.0,
            soft_mode: true,
            penalty: 1e4,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_outer == 0
            || self.max_newton == 0
            || !(self.newton_tol > 0.0 && self.gap_tol > 0.0 && self.t_init > 0.0)
            || !(self.t_growth > 1.0)
            || !(self.penalty > 0.0)
        {
            return Err(Error::InvalidArgument(format!("invalid solver options: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    SoftFeasible,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Optimal => "optimal",
            Self::Infeasible => "infeasible",
            Self::SoftFeasible => "soft_feasible",
        }
    }
}

#[derive(Debug, Clone)]
pub struct MpcSolution {
    pub u_hat: DVector<f64>,
    /// Objective of the horizon program at `u_hat`, without soft penalties.
    pub objective: f64,
    pub status: SolveStatus,
    /// Newton steps over all phases.
    pub iterations: usize,
    pub kkt_residual: f64,
    /// Barrier-program objective after each outer iteration of the final phase.
    pub history: Vec<f64>,
}

impl MpcSolution {
    pub fn first_control(&self) -> Vector2<f64> {
        Vector2::new(self.u_hat[0], self.u_hat[1])
    }
}

#[derive(Debug, Clone, Copy)]
enum Func {
    Motion(usize),
    Sensing(usize),
}

#[derive(Debug, Clone, Copy)]
enum Row {
    /// `f(u) - x[slack] <= 0`
    Bound { func: Func, slack: Option<usize> },
    /// `-x[j] <= 0`
    NonNeg(usize),
}

#[derive(Debug, Clone, Copy)]
enum Goal {
    Horizon,
    Slack(usize),
    Penalized { start: usize, count: usize, rho: f64 },
}

struct Program<'a> {
    problem: &'a MpcProblem,
    n: usize,
    rows: Vec<Row>,
    goal: Goal,
}

struct Eval {
    value: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

impl Program<'_> {
    fn nu(&self) -> usize {
        self.problem.dim()
    }

    fn func_value(&self, f: Func, u: &DVector<f64>) -> f64 {
        match f {
            Func::Motion(k) => self.problem.motion[k].value(u),
            Func::Sensing(k) => self.problem.sensing[k].value(u),
        }
    }

    fn func_eval(&self, f: Func, u: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        match f {
            Func::Motion(k) => {
                let c = &self.problem.motion[k];
                (c.value(u), c.gradient(u), c.hessian())
            }
            Func::Sensing(k) => {
                let c = &self.problem.sensing[k];
                (c.value(u), c.gradient(u), c.hessian(u))
            }
        }
    }

    fn controls(&self, x: &DVector<f64>) -> DVector<f64> {
        x.rows(0, self.nu()).into_owned()
    }

    fn row_value(&self, row: Row, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        match row {
            Row::Bound { func, slack } => self.func_value(func, u) - slack.map_or(0.0, |j| x[j]),
            Row::NonNeg(j) => -x[j],
        }
    }

    fn row_eval(&self, row: Row, x: &DVector<f64>, u: &DVector<f64>) -> Eval {
        let mut grad = DVector::zeros(self.n);
        let mut hess = DMatrix::zeros(self.n, self.n);
        let value = match row {
            Row::Bound { func, slack } => {
                let nu = self.nu();
                let (v, g, h) = self.func_eval(func, u);
                grad.rows_mut(0, nu).copy_from(&g);
                hess.view_mut((0, 0), (nu, nu)).copy_from(&h);
                match slack {
                    Some(j) => {
                        grad[j] = -1.0;
                        v - x[j]
                    }
                    None => v,
                }
            }
            Row::NonNeg(j) => {
                grad[j] = -1.0;
                -x[j]
            }
        };
        Eval { value, grad, hess }
    }

    /// Row values when all are strictly negative.
    fn strict_values(&self, x: &DVector<f64>) -> Option<Vec<f64>> {
        let u = self.controls(x);
        let vals: Vec<f64> = self.rows.iter().map(|&r| self.row_value(r, x, &u)).collect();
        vals.iter().all(|v| *v < 0.0 && v.is_finite()).then_some(vals)
    }

    fn goal_eval(&self, x: &DVector<f64>) -> Eval {
        let nu = self.nu();
        let mut grad = DVector::zeros(self.n);
        let mut hess = DMatrix::zeros(self.n, self.n);
        let value = match self.goal {
            Goal::Horizon | Goal::Penalized { .. } => {
                let u = self.controls(x);
                let obj = &self.problem.objective;
                grad.rows_mut(0, nu).copy_from(&obj.gradient(&u));
                hess.view_mut((0, 0), (nu, nu)).copy_from(&obj.hessian());
                let mut v = obj.value(&u);
                if let Goal::Penalized { start, count, rho } = self.goal {
                    for j in start..start + count {
                        v += rho * x[j];
                        grad[j] = rho;
                    }
                }
                v
            }
            Goal::Slack(j) => {
                grad[j] = 1.0;
                x[j]
            }
        };
        Eval { value, grad, hess }
    }

    fn goal_value(&self, x: &DVector<f64>) -> f64 {
        match self.goal {
            Goal::Horizon => self.problem.objective.value(&self.controls(x)),
            Goal::Penalized { start, count, rho } => {
                self.problem.objective.value(&self.controls(x)) + rho * x.rows(start, count).sum()
            }
            Goal::Slack(j) => x[j],
        }
    }

    fn barrier_value(&self, x: &DVector<f64>, t: f64) -> Option<f64> {
        let vals = self.strict_values(x)?;
        Some(t * self.goal_value(x) - vals.iter().map(|v| (-v).ln()).sum::<f64>())
    }

    /// Scaled KKT residual: the smaller of two certificates, one using the
    /// barrier multipliers `1 / (-t f_i)` and one using least-squares
    /// multipliers on the near-active rows. The second avoids the round-off
    /// in `f_i` when a constraint is active at large `t`.
    fn kkt_residual(&self, x: &DVector<f64>, t: f64) -> f64 {
        let u = self.controls(x);
        let goal = self.goal_eval(x);
        let evals: Vec<Eval> = self.rows.iter().map(|&row| self.row_eval(row, x, &u)).collect();
        let primal = evals.iter().fold(0.0f64, |p, e| p.max(e.value));

        let mut resid = goal.grad.clone();
        let mut scale = goal.grad.norm().max(1.0);
        for e in &evals {
            let term = &e.grad * (1.0 / (-t * e.value));
            scale = scale.max(term.norm());
            resid += term;
        }
        let barrier_cert = (resid.norm() / scale).max(1.0 / t);

        let active: Vec<&Eval> = evals
            .iter()
            .filter(|e| e.grad.norm() / (-t * e.value) >= ACTIVE_MULTIPLIER * goal.grad.norm().max(1.0))
            .collect();
        let ls_cert = if active.is_empty() {
            goal.grad.norm() / scale
        } else {
            let g = DMatrix::from_columns(&active.iter().map(|e| e.grad.clone()).collect::<Vec<_>>());
            match g.clone().svd(true, true).solve(&(-&goal.grad), 1e-12) {
                Ok(lambda) if lambda.iter().all(|&l| l >= 0.0) => {
                    let stat = (&goal.grad + &g * &lambda).norm() / scale;
                    let comp =
                        active.iter().zip(lambda.iter()).map(|(e, l)| l * e.value.abs()).fold(0.0f64, f64::max) / scale;
                    stat.max(comp)
                }
                _ => f64::INFINITY,
            }
        };
        barrier_cert.min(ls_cert).max(primal)
    }
}

fn solve_spd(h: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = h.clone().cholesky() {
        return Some(ch.solve(rhs));
    }
    let base = h.diagonal().abs().max().max(1e-300);
    let mut jitter = base * 1e-12;
    for _ in 0..8 {
        let mut hj = h.clone();
        for k in 0..hj.nrows() {
            hj[(k, k)] += jitter;
        }
        if let Some(ch) = hj.cholesky() {
            return Some(ch.solve(rhs));
        }
        jitter *= 100.0;
    }
    h.clone().lu().solve(rhs)
}

struct Run {
    x: DVector<f64>,
    t: f64,
    history: Vec<f64>,
    iterations: usize,
    stopped_early: bool,
}

/// Barrier path following from a strictly feasible `x0`.
fn barrier<F>(prog: &Program, x0: DVector<f64>, opts: &SolverOptions, early_stop: F) -> Result<Run>
where
    F: Fn(&DVector<f64>) -> bool,
{
    let m = prog.rows.len() as f64;
    let mut x = x0;
    let mut t = opts.t_init;
    let mut history = Vec::new();
    let mut iterations = 0;
    if prog.strict_values(&x).is_none() {
        return Err(Error::NumericalFailure("barrier start is not strictly feasible".into()));
    }
    for _ in 0..opts.max_outer {
        if early_stop(&x) {
            return Ok(Run { x, t, history, iterations, stopped_early: true });
        }
        for _ in 0..opts.max_newton {
            let u = prog.controls(&x);
            let goal = prog.goal_eval(&x);
            let mut grad = goal.grad * t;
            let mut hess = goal.hess * t;
            for &row in &prog.rows {
                let e = prog.row_eval(row, &x, &u);
                let inv = -1.0 / e.value;
                hess += &e.grad * e.grad.transpose() * (inv * inv) + e.hess * inv;
                grad += e.grad * inv;
            }
            let Some(dx) = solve_spd(&hess, &(-&grad)) else {
                return Err(Error::NumericalFailure("singular Newton system".into()));
            };
            let slope = grad.dot(&dx);
            if !slope.is_finite() {
                return Err(Error::NumericalFailure("non-finite Newton direction".into()));
            }
            if -slope / 2.0 <= opts.newton_tol {
                break;
            }
            let phi0 =
                prog.barrier_value(&x, t).ok_or_else(|| Error::NumericalFailure("iterate left the interior".into()))?;
            // Pure Newton inside the quadratic-convergence region, where Armijo is round-off bound.
            let pure = -slope < PURE_NEWTON_DECREMENT * PURE_NEWTON_DECREMENT;
            let mut step = 1.0;
            let accepted = loop {
                let trial = &x + &dx * step;
                if let Some(phi) = prog.barrier_value(&trial, t) {
                    if pure || phi <= phi0 + ARMIJO * step * slope {
                        break Some(trial);
                    }
                }
                step *= BACKTRACK;
                if step < MIN_STEP {
                    break None;
                }
            };
            let Some(next) = accepted else { break };
            x = next;
            iterations += 1;
            if early_stop(&x) {
                return Ok(Run { x, t, history, iterations, stopped_early: true });
            }
        }
        history.push(prog.goal_value(&x));
        if m / t < opts.gap_tol {
            break;
        }
        t *= opts.t_growth;
    }
    Ok(Run { x, t, history, iterations, stopped_early: false })
}

/// `u = 0`, or a uniform deceleration when the UAV is at its speed limit.
fn start_point(p: &MpcProblem) -> DVector<f64> {
    let speed = p.v_uav.norm();
    if speed < 0.999 * p.v_max {
        return DVector::zeros(p.dim());
    }
    let c = (1.0 / (2.0 * p.dt * p.horizon as f64)).min(p.a_max / (2.0 * speed));
    let u0 = -p.v_uav * c;
    DVector::from_fn(p.dim(), |k, _| u0[k % 2])
}

/// Finds a point strictly satisfying the given functions, starting from `u0`.
fn phase_one(
    p: &MpcProblem,
    funcs: &[Func],
    u0: DVector<f64>,
    opts: &SolverOptions,
) -> Result<(Option<DVector<f64>>, usize)> {
    let nu = p.dim();
    let probe = Program { problem: p, n: nu, rows: Vec::new(), goal: Goal::Horizon };
    let vals: Vec<f64> = funcs.iter().map(|&f| probe.func_value(f, &u0)).collect();
    if vals.iter().all(|&v| v < 0.0) {
        return Ok((Some(u0), 0));
    }
    let slack = nu;
    let rows =
        funcs.iter().zip(&vals).map(|(&func, &v)| Row::Bound { func, slack: (v >= 0.0).then_some(slack) }).collect();
    let prog = Program { problem: p, n: nu + 1, rows, goal: Goal::Slack(slack) };
    let worst = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut x0 = DVector::zeros(nu + 1);
    x0.rows_mut(0, nu).copy_from(&u0);
    x0[slack] = worst + worst.abs().max(1.0);
    let done = |x: &DVector<f64>| {
        let u = x.rows(0, nu).into_owned();
        x[slack] < 0.0 && funcs.iter().all(|&f| probe.func_value(f, &u) < 0.0)
    };
    let run = barrier(&prog, x0, opts, done)?;
    let u = run.x.rows(0, nu).into_owned();
    Ok((run.stopped_early.then_some(u), run.iterations))
}

/// Solves the horizon program.
pub fn solve(p: &MpcProblem, opts: &SolverOptions) -> Result<MpcSolution> {
    opts.validate()?;
    let nu = p.dim();
    let motion: Vec<Func> = (0..p.motion.len()).map(Func::Motion).collect();
    let all: Vec<Func> = motion.iter().copied().chain((0..p.sensing.len()).map(Func::Sensing)).collect();
    let u0 = start_point(p);
    let (start, mut iterations) = phase_one(p, &all, u0.clone(), opts)?;

    if let Some(u_start) = start {
        let prog = Program {
            problem: p,
            n: nu,
            rows: all.iter().map(|&func| Row::Bound { func, slack: None }).collect(),
            goal: Goal::Horizon,
        };
        let run = barrier(&prog, u_start, opts, |_| false)?;
        iterations += run.iterations;
        return Ok(MpcSolution {
            objective: p.objective_value(&run.x),
            kkt_residual: prog.kkt_residual(&run.x, run.t),
            u_hat: run.x,
            status: SolveStatus::Optimal,
            iterations,
            history: run.history,
        });
    }

    let infeasible = |u: DVector<f64>, iterations| MpcSolution {
        objective: p.objective_value(&u),
        u_hat: u,
        status: SolveStatus::Infeasible,
        iterations,
        kkt_residual: f64::INFINITY,
        history: Vec::new(),
    };
    if !opts.soft_mode || p.sensing.is_empty() {
        return Ok(infeasible(u0, iterations));
    }
    let (motion_start, more) = phase_one(p, &motion, u0.clone(), opts)?;
    iterations += more;
    let Some(u_start) = motion_start else {
        return Ok(infeasible(u0, iterations));
    };

    let k = p.sensing.len();
    let mut rows: Vec<Row> = motion.iter().map(|&func| Row::Bound { func, slack: None }).collect();
    for j in 0..k {
        rows.push(Row::Bound { func: Func::Sensing(j), slack: Some(nu + j) });
        rows.push(Row::NonNeg(nu + j));
    }
    let prog =
        Program { problem: p, n: nu + k, rows, goal: Goal::Penalized { start: nu, count: k, rho: opts.penalty } };
    let mut x0 = DVector::zeros(nu + k);
    x0.rows_mut(0, nu).copy_from(&u_start);
    for j in 0..k {
        x0[nu + j] = p.sensing[j].value(&u_start).max(0.0) + 1.0;
    }
    let run = barrier(&prog, x0, opts, |_| false)?;
    iterations += run.iterations;
    let u = run.x.rows(0, nu).into_owned();
    Ok(MpcSolution {
        objective: p.objective_value(&u),
        kkt_residual: prog.kkt_residual(&run.x, run.t),
        u_hat: u,
        status: SolveStatus::SoftFeasible,
        iterations,
        history: run.history,
    })
}
