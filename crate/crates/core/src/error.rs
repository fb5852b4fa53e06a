use thiserror::Error;

/// Errors produced by the tracking toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// The beam carries no power toward the target, so range/Doppler noise is unbounded.
    #[error("zero beamforming gain toward the target; measurement variance is infinite")]
    InfiniteVariance,

    /// The rate threshold cannot be met even with full-power MRT toward the ground user.
    #[error("rate threshold unreachable: eta*d_c^2 = {required} exceeds gamma = {gamma}")]
    RateInfeasible { required: f64, gamma: f64 },

    /// The sensing threshold cannot be met even with full-power MRT toward the target.
    #[error("sensing threshold unreachable: Gamma_d = {required} exceeds gamma = {gamma}")]
    SensingInfeasible { required: f64, gamma: f64 },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("optimization problem is infeasible: {0}")]
    Infeasible(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
