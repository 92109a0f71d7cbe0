//! Value-iteration planners: the stationary MDP baseline, the time-varying
//! planner with coupled time estimation, the time-layered baseline, and the
//! prioritized-sweeping baseline with greedy time lookahead.

pub mod atmdp;
pub mod dtmdp;
pub mod mdp;
pub mod planner;
pub mod tvmdp;

use serde::{Deserialize, Serialize};

use crate::disturbance::TimeVaryingField;
use crate::error::{Error, Result};
use crate::gridworld::{Action, ActionSet, GridWorld, StateId};
use crate::timing::TimingConfig;
use crate::transition::{state_action_pmfs, MotionConfig, TransitionModel, TransitionPmf};

pub use atmdp::{atmdp_solve, AtmdpSolution};
pub use dtmdp::{dtmdp_solve, DtmdpSolution, LayeredPolicy};
pub use mdp::{mdp_value_iteration, MdpSolution};
pub use planner::{evaluate_policy_times, Plan, PlanPolicy, PlanSnapshot, Planner, SolverPlanner};
pub use tvmdp::{tvmdp_solve, TvmdpSolution};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardModel {
    /// Collected on every transition into the goal, including its self-loop.
    pub goal_reward: f64,
    /// Collected on every other transition; non-positive.
    pub step_cost: f64,
    pub discount: f64,
}

impl Default for RewardModel {
    fn default() -> Self {
        RewardModel {
            goal_reward: 100.0,
            step_cost: 0.0,
            discount: 0.95,
        }
    }
}

impl RewardModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.goal_reward.is_finite() && self.goal_reward > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "goal_reward must be positive, got {}",
                self.goal_reward
            )));
        }
        if !(self.step_cost.is_finite() && self.step_cost <= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "step_cost must be <= 0, got {}",
                self.step_cost
            )));
        }
        if !(0.0..1.0).contains(&self.discount) {
            return Err(Error::InvalidParameter(format!(
                "discount must be in [0, 1), got {}",
                self.discount
            )));
        }
        Ok(())
    }

    pub fn reward(&self, goal: StateId, target: StateId) -> f64 {
        if target == goal {
            self.goal_reward
        } else {
            self.step_cost
        }
    }
}

/// Everything a planner needs to know about the world.
#[derive(Clone, Debug)]
pub struct Problem {
    pub grid: GridWorld,
    pub field: TimeVaryingField,
    pub motion: MotionConfig,
    pub reward: RewardModel,
    pub timing: TimingConfig,
}

impl Problem {
    pub fn new(
        grid: GridWorld,
        field: TimeVaryingField,
        motion: MotionConfig,
        reward: RewardModel,
        timing: TimingConfig,
    ) -> Result<Self> {
        reward.validate()?;
        if !(timing.eps_vel.is_finite() && timing.eps_vel >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "eps_vel must be >= 0, got {}",
                timing.eps_vel
            )));
        }
        if !(timing.solver_tol > 0.0 && timing.solver_tol < 1.0) || timing.max_iter_factor == 0 {
            return Err(Error::InvalidParameter(
                "solver_tol must be in (0, 1) and max_iter_factor >= 1".into(),
            ));
        }
        Ok(Problem {
            grid,
            field,
            motion,
            reward,
            timing,
        })
    }

    pub fn goal(&self) -> StateId {
        self.grid.goal()
    }

    fn check_state(&self, s: StateId) -> Result<()> {
        if self.grid.is_valid(s) {
            Ok(())
        } else {
            Err(Error::InvalidState(s))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValueFunction {
    pub values: Vec<f64>,
    pub epoch: usize,
}

impl ValueFunction {
    pub fn get(&self, s: StateId) -> f64 {
        self.values[s]
    }
}

/// Optimal action sets per cell id; blocked cells hold the empty set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Policy {
    sets: Vec<ActionSet>,
}

impl Policy {
    pub fn new(sets: Vec<ActionSet>) -> Self {
        Policy { sets }
    }

    pub fn actions(&self, s: StateId) -> ActionSet {
        self.sets[s]
    }

    pub fn sets(&self) -> &[ActionSet] {
        &self.sets
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    /// Number of cells whose action set differs.
    pub fn differences(&self, other: &Policy) -> usize {
        self.sets
            .iter()
            .zip(&other.sets)
            .filter(|(a, b)| a != b)
            .count()
    }

    /// Checks the non-empty, admissible invariant against a grid.
    pub fn validate(&self, grid: &GridWorld) -> Result<()> {
        for s in grid.states() {
            let set = self.sets[s];
            if set.is_empty() {
                return Err(Error::EmptyActions(s));
            }
            let admissible: ActionSet = grid.neighbors(s)?.iter().map(|e| e.0).collect();
            if set.iter().any(|a| !admissible.contains(a)) {
                return Err(Error::InvalidParameter(format!(
                    "inadmissible action in state {s}: {set:?}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-state, per-action transition PMFs, each evaluated at its state's
/// own time. The goal's actions all self-loop.
#[derive(Clone, Debug)]
pub(crate) struct PmfBank {
    pmfs: Vec<Vec<TransitionPmf>>,
    times: Vec<f64>,
}

impl PmfBank {
    pub fn at_time(problem: &Problem, t: f64) -> Result<Self> {
        Self::build(problem, &vec![t; problem.grid.num_cells()])
    }

    pub fn build(problem: &Problem, at: &[f64]) -> Result<Self> {
        let n = problem.grid.num_cells();
        let mut bank = PmfBank {
            pmfs: vec![Vec::new(); n],
            times: vec![f64::NAN; n],
        };
        bank.refresh(problem, at)?;
        Ok(bank)
    }

    /// Recomputes the PMFs of states whose evaluation time changed.
    /// Returns the number of states recomputed.
    pub fn refresh(&mut self, problem: &Problem, at: &[f64]) -> Result<usize> {
        let grid = &problem.grid;
        let static_field = problem.field.is_static();
        let mut updated = 0;
        for s in grid.states() {
            let t = at[s];
            let old = self.times[s];
            if old == t || (static_field && !old.is_nan()) {
                continue;
            }
            self.pmfs[s] = if s == grid.goal() {
                grid.neighbors(s)?
                    .iter()
                    .map(|_| TransitionPmf::absorbing(s, t))
                    .collect()
            } else {
                state_action_pmfs(
                    grid,
                    s,
                    &problem.field,
                    t,
                    &problem.motion,
                    TransitionModel::Synergistic,
                )?
            };
            self.times[s] = t;
            updated += 1;
        }
        Ok(updated)
    }

    pub fn actions(&self, s: StateId) -> &[TransitionPmf] {
        &self.pmfs[s]
    }
}

fn q_value(pmf: &TransitionPmf, reward: &RewardModel, goal: StateId, v: &[f64]) -> f64 {
    pmf.entries
        .iter()
        .map(|&(j, p)| p * (reward.reward(goal, j) + reward.discount * v[j]))
        .sum()
}

/// Best Q-value at `s` under `v`.
pub(crate) fn backup(
    grid: &GridWorld,
    bank: &PmfBank,
    reward: &RewardModel,
    s: StateId,
    v: &[f64],
) -> f64 {
    bank.actions(s)
        .iter()
        .map(|pmf| q_value(pmf, reward, grid.goal(), v))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// One synchronous Bellman sweep; returns the sup-norm change.
pub(crate) fn sweep(
    grid: &GridWorld,
    bank: &PmfBank,
    reward: &RewardModel,
    v: &[f64],
    out: &mut [f64],
) -> f64 {
    let mut delta: f64 = 0.0;
    for s in grid.states() {
        out[s] = backup(grid, bank, reward, s, v);
        delta = delta.max((out[s] - v[s]).abs());
    }
    delta
}

/// Largest Bellman residual `|B v - v|` over all states.
pub(crate) fn bellman_residual(
    grid: &GridWorld,
    bank: &PmfBank,
    reward: &RewardModel,
    v: &[f64],
) -> f64 {
    grid.states()
        .map(|s| (backup(grid, bank, reward, s, v) - v[s]).abs())
        .fold(0.0, f64::max)
}

/// Q-values closer than this to the best are treated as ties: the error
/// bound `2 gamma tol / (1 - gamma)` on Q plus a relative round-off margin.
pub(crate) fn tie_tolerance(tol: f64, reward: &RewardModel, v: &[f64]) -> f64 {
    let scale = v.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    2.0 * reward.discount * tol / (1.0 - reward.discount) + 1e-9 * scale
}

pub(crate) fn greedy_policy(
    grid: &GridWorld,
    bank: &PmfBank,
    reward: &RewardModel,
    v: &[f64],
    tie_tol: f64,
) -> Policy {
    let mut sets = vec![ActionSet::EMPTY; grid.num_cells()];
    for s in grid.states() {
        let neighbors = grid.neighbors_unchecked(s);
        let q: Vec<f64> = bank
            .actions(s)
            .iter()
            .map(|p| q_value(p, reward, grid.goal(), v))
            .collect();
        let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        sets[s] = neighbors
            .iter()
            .zip(&q)
            .filter(|(_, &qa)| qa >= best - tie_tol)
            .map(|(&(a, _), _)| a)
            .collect();
    }
    Policy::new(sets)
}

/// Mixture PMF of the policy's tied actions at every state.
pub(crate) fn policy_pmfs(
    grid: &GridWorld,
    bank: &PmfBank,
    policy: &Policy,
) -> Result<Vec<TransitionPmf>> {
    (0..grid.num_cells())
        .map(|s| {
            if grid.is_blocked(s) {
                return Ok(TransitionPmf {
                    source: s,
                    time: 0.0,
                    entries: Vec::new(),
                });
            }
            crate::transition::mixture_from_set(grid, s, policy.actions(s), bank.actions(s))
        })
        .collect()
}

/// Mixture PMFs for the temporal channel under the configured chain model.
pub(crate) fn chain_pmfs(
    problem: &Problem,
    bank: &PmfBank,
    policy: &Policy,
) -> Result<Vec<TransitionPmf>> {
    match problem.timing.chain_model {
        TransitionModel::Synergistic => policy_pmfs(&problem.grid, bank, policy),
        TransitionModel::ActionOnly => {
            let grid = &problem.grid;
            (0..grid.num_cells())
                .map(|s| {
                    if grid.is_blocked(s) {
                        return Ok(TransitionPmf {
                            source: s,
                            time: 0.0,
                            entries: Vec::new(),
                        });
                    }
                    let t = bank.times[s];
                    let tied: Vec<Action> = policy.actions(s).iter().collect();
                    crate::transition::mixture_pmf(
                        grid,
                        s,
                        &tied,
                        &problem.field,
                        t,
                        &problem.motion,
                        TransitionModel::ActionOnly,
                    )
                })
                .collect()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Mdp,
    Tvmdp,
    Dtmdp,
    Atmdp,
}

impl SolverKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverKind::Mdp => "mdp",
            SolverKind::Tvmdp => "tvmdp",
            SolverKind::Dtmdp => "dtmdp",
            SolverKind::Atmdp => "atmdp",
        }
    }
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-solver settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub kind: SolverKind,
    /// Label used in output file names; defaults to the kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Sup-norm value tolerance.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Hops between replans; 0 plans once. Defaults to 1 for the solvers
    /// anchored at the current state and to plan-once for the standard MDP
    /// and the time-layered solver.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replan_interval: Option<usize>,
    /// Time layers (time-layered solver only).
    #[serde(default = "default_layers")]
    pub layers: usize,
    /// Planning horizon in seconds (time-layered solver only); defaults to
    /// the field horizon, or (width + height) hop durations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    /// Cap on |S| * layers.
    #[serde(default = "default_max_layered_states")]
    pub max_layered_states: usize,
}

fn default_tol() -> f64 {
    1e-8
}

fn default_max_iter() -> usize {
    10_000
}

fn default_layers() -> usize {
    10
}

fn default_max_layered_states() -> usize {
    200_000
}

impl SolverConfig {
    pub fn new(kind: SolverKind) -> Self {
        SolverConfig {
            kind,
            name: None,
            tol: default_tol(),
            max_iter: default_max_iter(),
            replan_interval: None,
            layers: default_layers(),
            horizon: None,
            max_layered_states: default_max_layered_states(),
        }
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.kind.to_string())
    }

    /// Hops between replans, `None` for plan-once.
    pub fn effective_replan_interval(&self) -> Option<usize> {
        let r = self.replan_interval.unwrap_or(match self.kind {
            SolverKind::Mdp | SolverKind::Dtmdp => 0,
            SolverKind::Tvmdp | SolverKind::Atmdp => 1,
        });
        (r > 0).then_some(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be >= 1".into()));
        }
        if self.kind == SolverKind::Dtmdp && self.layers < 2 {
            return Err(Error::InvalidParameter(format!(
                "layers must be >= 2, got {}",
                self.layers
            )));
        }
        if let Some(h) = self.horizon {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "horizon must be positive, got {h}"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reward_validation() {
        assert!(RewardModel::default().validate().is_ok());
        for bad in [
            RewardModel {
                discount: 1.0,
                ..Default::default()
            },
            RewardModel {
                goal_reward: 0.0,
                ..Default::default()
            },
            RewardModel {
                step_cost: 0.5,
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn solver_config_defaults() {
        let c: SolverConfig = serde_json::from_str(r#"{"kind": "dtmdp"}"#).unwrap();
        assert_eq!(c.layers, 10);
        assert_eq!(c.effective_replan_interval(), None);
        assert_eq!(c.label(), "dtmdp");
        let t: SolverConfig = serde_json::from_str(r#"{"kind": "tvmdp", "name": "tv"}"#).unwrap();
        assert_eq!(t.effective_replan_interval(), Some(1));
        assert_eq!(t.label(), "tv");
        let m: SolverConfig =
            serde_json::from_str(r#"{"kind": "mdp", "replan_interval": 2}"#).unwrap();
        assert_eq!(m.effective_replan_interval(), Some(2));
        assert_eq!(
            SolverConfig::new(SolverKind::Mdp).effective_replan_interval(),
            None
        );
        assert!(
            serde_json::from_str::<SolverConfig>(r#"{"kind": "mdp", "tolerance": 1}"#).is_err()
        );
    }
}
