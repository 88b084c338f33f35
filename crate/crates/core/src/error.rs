use thiserror::Error;

use crate::equilibrium::SolveOutcome;
use crate::lp::LpStatus;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("transition row at state `{state}`, action ({action}) is not stochastic: {detail}")]
    NonStochasticRow {
        state: String,
        action: String,
        detail: String,
    },

    #[error("absorbing state `{state}`, action ({action}): {detail}")]
    AbsorbingViolation {
        state: String,
        action: String,
        detail: String,
    },

    #[error("player {player} has no admissible action at state `{state}`")]
    EmptyActionSet { player: usize, state: String },

    #[error("bad initial distribution: {0}")]
    BadDistribution(String),

    #[error("strategy does not match the model: {0}")]
    ProfileModelMismatch(String),

    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),

    #[error("the chain induced by the strategy does not absorb from state `{state}`")]
    NotAbsorbingUnderStrategy { state: String },

    #[error("model is not absorbing: an end component containing `{state}` is reachable")]
    NotAbsorbing { state: String },

    #[error("occupation LP is unbounded: the model is not absorbing from the initial distribution")]
    Unbounded,

    #[error("characteristic LP is infeasible")]
    InfeasibleLp,

    #[error("player {player} cannot satisfy its constraints against the frozen opponents")]
    ConstraintInfeasible { player: usize },

    #[error("Slater condition fails for player {player} (max-min slack {slack})")]
    SlaterFailure { player: usize, slack: f64 },

    #[error("LP solver stopped with status {0:?}")]
    LpFailure(LpStatus),

    #[error("best-response dynamics did not reach the target epsilon (best {})", .0.certificate.epsilon)]
    NoConvergence(Box<SolveOutcome>),

    #[error("invalid solver configuration: {0}")]
    Config(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("I/O error on `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonStochasticRow { .. }
            | Error::AbsorbingViolation { .. }
            | Error::EmptyActionSet { .. }
            | Error::BadDistribution(_)
            | Error::ProfileModelMismatch(_)
            | Error::InvalidStrategy(_)
            | Error::NotAbsorbingUnderStrategy { .. }
            | Error::NotAbsorbing { .. }
            | Error::Unbounded
            | Error::Config(_) => 1,
            Error::InfeasibleLp
            | Error::ConstraintInfeasible { .. }
            | Error::SlaterFailure { .. }
            | Error::LpFailure(_) => 2,
            Error::NoConvergence(_) => 3,
            Error::Schema(_) | Error::Io { .. } => 4,
        }
    }

    /// Short machine-readable tag used in diagnostic records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonStochasticRow { .. } => "NonStochasticRow",
            Error::AbsorbingViolation { .. } => "AbsorbingViolation",
            Error::EmptyActionSet { .. } => "EmptyActionSet",
            Error::BadDistribution(_) => "BadDistribution",
            Error::ProfileModelMismatch(_) => "ProfileModelMismatch",
            Error::InvalidStrategy(_) => "InvalidStrategy",
            Error::NotAbsorbingUnderStrategy { .. } => "NotAbsorbingUnderStrategy",
            Error::NotAbsorbing { .. } => "NotAbsorbing",
            Error::Unbounded => "Unbounded",
            Error::InfeasibleLp => "InfeasibleLP",
            Error::ConstraintInfeasible { .. } => "ConstraintInfeasible",
            Error::SlaterFailure { .. } => "SlaterFailure",
            Error::LpFailure(_) => "LpFailure",
            Error::NoConvergence(_) => "NoConvergence",
            Error::Config(_) => "Config",
            Error::Schema(_) => "Schema",
            Error::Io { .. } => "Io",
        }
    }
}
