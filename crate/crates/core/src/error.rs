use thiserror::Error;

/// Errors produced by the solvers, approximations and report builders.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("a1/b1 = {ratio} is not an integral population ceiling")]
    NonIntegralCeiling { ratio: f64 },

    #[error("R0 = {r0} but the asymptotic formulas are valid only above threshold (R0 > 1)")]
    BelowThreshold { r0: f64 },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("iteration did not converge after {iterations} sweeps (last residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("trajectory escaped: |kappa| = {norm:e} exceeds {bound:e} at t = {time}")]
    TrajectoryEscaped { norm: f64, bound: f64, time: f64 },

    #[error(
        "no stationary point reached by t = {time}: last state {state:?}, rhs norm {rhs_norm:e}"
    )]
    NotStationary {
        time: f64,
        state: [f64; 3],
        rhs_norm: f64,
    },

    #[error("closure breaks down: discriminant {discriminant:e} is negative")]
    ClosureBreakdown { discriminant: f64 },

    #[error("no admissible critical point: {0}")]
    NoAdmissibleRoot(String),

    #[error("more than one stable admissible critical point: {0}")]
    AmbiguousRoots(String),

    #[error(
        "boundary mass {mass:e} exceeds {limit:e} at s_max = {s_max}, i_max = {i_max}; enlarge the truncation"
    )]
    TruncationTooSmall {
        mass: f64,
        limit: f64,
        s_max: usize,
        i_max: usize,
    },

    #[error("state space has {states} states, limit is {limit}")]
    StateSpaceTooLarge { states: usize, limit: usize },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
