//! Uniform planning interface used by the simulator.

use std::sync::Arc;
use std::time::Duration;

use super::{
    atmdp::{atmdp_solve, AtmdpSolution},
    chain_pmfs,
    dtmdp::{dtmdp_solve, DtmdpSolution, LayeredPolicy},
    mdp::{mdp_value_iteration, MdpSolution},
    tvmdp::{tvmdp_solve, TvmdpSolution},
    PmfBank, Policy, Problem, SolverConfig, SolverKind,
};
use crate::error::Result;
use crate::gridworld::{ActionSet, StateId};
use crate::timing::{multi_hop_times, OneHopTable, TimeChain, TransitionTimeTable};
use crate::transition::TransitionPmf;

#[derive(Clone, Debug, PartialEq)]
pub enum PlanPolicy {
    Stationary(Policy),
    Layered(LayeredPolicy),
}

impl PlanPolicy {
    pub fn actions(&self, s: StateId, t: f64) -> ActionSet {
        match self {
            PlanPolicy::Stationary(p) => p.actions(s),
            PlanPolicy::Layered(p) => p.actions(s, t),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Plan {
    pub policy: PlanPolicy,
    /// Wall-clock spent in the linear systems of the temporal channel.
    pub linear_solve_time: Duration,
}

/// A solved instance, reduced to what a policy map needs.
#[derive(Clone, Debug)]
pub struct PlanSnapshot {
    pub origin: StateId,
    pub t0: f64,
    pub policy: Policy,
    /// `t(origin, s)` for every cell.
    pub multi_hop: Vec<f64>,
    /// Policy mixture PMF of every cell.
    pub pmfs: Vec<TransitionPmf>,
}

pub trait Planner: Send {
    fn plan(&mut self, s: StateId, t: f64) -> Result<Plan>;

    /// Snapshot of the most recent plan, if any. May run extra computation
    /// (e.g. arrival times for solvers that do not produce them).
    fn snapshot(&self) -> Result<Option<PlanSnapshot>>;
}

enum Solved {
    Mdp(MdpSolution),
    Tvmdp(TvmdpSolution),
    Dtmdp(DtmdpSolution),
    Atmdp(AtmdpSolution),
}

/// Planner backed by one of the four solvers.
pub struct SolverPlanner {
    problem: Arc<Problem>,
    config: SolverConfig,
    last: Option<(StateId, f64, Solved)>,
}

impl SolverPlanner {
    pub fn new(problem: Arc<Problem>, config: SolverConfig) -> Result<Self> {
        config.validate()?;
        Ok(SolverPlanner {
            problem,
            config,
            last: None,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    /// Planning horizon of the time-layered solver.
    pub fn horizon(&self) -> f64 {
        let p = &self.problem;
        self.config
            .horizon
            .or(p.field.horizon())
            .unwrap_or_else(|| (p.grid.width() + p.grid.height()) as f64 * p.motion.duration)
    }
}

impl Planner for SolverPlanner {
    fn plan(&mut self, s: StateId, t: f64) -> Result<Plan> {
        let p = &*self.problem;
        let c = &self.config;
        let (policy, linear, solved) = match c.kind {
            SolverKind::Mdp => {
                let sol = mdp_value_iteration(p, t, c.tol, c.max_iter)?;
                (
                    PlanPolicy::Stationary(sol.policy.clone()),
                    Duration::ZERO,
                    Solved::Mdp(sol),
                )
            }
            SolverKind::Tvmdp => {
                let sol = tvmdp_solve(p, s, t, c.tol, c.max_iter)?;
                let linear = sol.linear.elapsed;
                (
                    PlanPolicy::Stationary(sol.policy.clone()),
                    linear,
                    Solved::Tvmdp(sol),
                )
            }
            SolverKind::Atmdp => {
                let sol = atmdp_solve(p, s, t, c.tol, c.max_iter)?;
                (
                    PlanPolicy::Stationary(sol.policy.clone()),
                    Duration::ZERO,
                    Solved::Atmdp(sol),
                )
            }
            SolverKind::Dtmdp => {
                let sol = dtmdp_solve(
                    p,
                    t,
                    self.horizon(),
                    c.layers,
                    c.tol,
                    c.max_iter,
                    c.max_layered_states,
                )?;
                (
                    PlanPolicy::Layered(sol.policy.clone()),
                    Duration::ZERO,
                    Solved::Dtmdp(sol),
                )
            }
        };
        self.last = Some((s, t, solved));
        Ok(Plan {
            policy,
            linear_solve_time: linear,
        })
    }

    fn snapshot(&self) -> Result<Option<PlanSnapshot>> {
        let Some((s0, t0, solved)) = &self.last else {
            return Ok(None);
        };
        let (s0, t0) = (*s0, *t0);
        let p = &*self.problem;
        let snap = match solved {
            Solved::Tvmdp(sol) => PlanSnapshot {
                origin: s0,
                t0,
                policy: sol.policy.clone(),
                multi_hop: sol.times.multi_hop.clone(),
                pmfs: sol.chain_pmfs.clone(),
            },
            Solved::Mdp(sol) => {
                let at = vec![t0; p.grid.num_cells()];
                evaluate(p, &sol.policy, s0, t0, &at)?
            }
            Solved::Atmdp(sol) => {
                let at: Vec<f64> = sol.times.iter().map(|x| t0 + x).collect();
                evaluate(p, &sol.policy, s0, t0, &at)?
            }
            Solved::Dtmdp(sol) => {
                let at = vec![t0; p.grid.num_cells()];
                evaluate(p, &sol.policy.layers[0], s0, t0, &at)?
            }
        };
        Ok(Some(snap))
    }
}

/// Arrival times and mixture PMFs of a fixed policy, with each state's
/// transition model evaluated at `at[s]`.
pub fn evaluate_policy_times(
    problem: &Problem,
    policy: &Policy,
    s0: StateId,
    at: &[f64],
) -> Result<(TransitionTimeTable, Vec<TransitionPmf>)> {
    let grid = &problem.grid;
    let bank = PmfBank::build(problem, at)?;
    let pmfs = chain_pmfs(problem, &bank, policy)?;
    let one_hop = OneHopTable::build(
        grid,
        &problem.field,
        at,
        &problem.motion,
        problem.timing.eps_vel,
    );
    let chain = TimeChain::from_grid(
        grid,
        &pmfs,
        &one_hop,
        &[grid.goal()],
        problem.motion.duration,
    )?;
    let m = multi_hop_times(s0, &chain, &problem.timing.krylov(), None)?;
    Ok((
        TransitionTimeTable {
            one_hop,
            multi_hop: m.times,
            origin: s0,
        },
        pmfs,
    ))
}

fn evaluate(
    problem: &Problem,
    policy: &Policy,
    s0: StateId,
    t0: f64,
    at: &[f64],
) -> Result<PlanSnapshot> {
    let (table, pmfs) = evaluate_policy_times(problem, policy, s0, at)?;
    Ok(PlanSnapshot {
        origin: s0,
        t0,
        policy: policy.clone(),
        multi_hop: table.multi_hop,
        pmfs,
    })
}
