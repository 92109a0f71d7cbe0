//! Planning for a robot on a grid under time-varying disturbances.
//!
//! The planners couple a Markov decision process with real-valued transition
//! times: values are computed against the disturbance the robot is expected
//! to meet when it actually arrives at each state.

pub mod disturbance;
pub mod error;
pub mod gridworld;
pub mod linalg;
pub mod sim;
pub mod solvers;
pub mod timing;
pub mod transition;

pub type Vec2 = nalgebra::Vector2<f64>;
pub type Mat2 = nalgebra::Matrix2<f64>;

pub use disturbance::{make_spinning, make_uniform, make_vortex, FieldSpec, TimeVaryingField};
pub use error::{Error, Result};
pub use gridworld::{Action, ActionSet, GridWorld, StateId};
pub use sim::{
    aggregate, rollout, visit_likelihood, RolloutConfig, RunMetrics, Summary, Trajectory,
};
pub use solvers::{
    Plan, PlanPolicy, PlanSnapshot, Planner, Policy, Problem, RewardModel, SolverConfig,
    SolverKind, SolverPlanner,
};
pub use timing::{OneHopTable, TimeChain, TimingConfig, TransitionTimeTable, UNREACHABLE_TIME};
pub use transition::{MotionConfig, NoiseConfig, TransitionModel, TransitionPmf};
