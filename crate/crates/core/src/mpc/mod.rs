//! Receding-horizon program assembly and its barrier solver.

mod problem;
mod solver;
mod stacked;

pub use problem::{
    build_problem, objective_by_terms, sensing_value_by_terms, ConstraintParams, MpcProblem, Quadratic,
    SensingConstraint,
};
pub use solver::{solve, MpcSolution, SolveStatus, SolverOptions};
pub use stacked::{build_stacked, expected_d4, expected_quadratic, HorizonStep, StackedModel};
