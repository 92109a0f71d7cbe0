use thiserror::Error;

use crate::gridworld::StateId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid state id {0}")]
    InvalidState(StateId),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("state {target} is not a one-hop neighbor of state {from}")]
    NotNeighbor { from: StateId, target: StateId },

    #[error("degenerate covariance: {0}")]
    DegenerateCovariance(String),

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("empty action set at state {0}")]
    EmptyActions(StateId),

    #[error("no transition pmf for state {0}")]
    MissingPmf(StateId),

    #[error(
        "linear solver stopped after {iterations} iterations with relative residual {residual:e}"
    )]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("time-layered model has {states} states, above the cap of {cap}")]
    TooLarge { states: usize, cap: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty run list")]
    EmptyRuns,

    #[error("end state {end_state}: {source}")]
    EndState {
        end_state: StateId,
        #[source]
        source: Box<Error>,
    },

    #[error("iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
