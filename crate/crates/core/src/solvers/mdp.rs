//! Standard value iteration on a stationary transition model.

use super::{
    greedy_policy, sweep, tie_tolerance, PmfBank, Policy, Problem, RewardModel, ValueFunction,
};
use crate::error::Result;
use crate::gridworld::GridWorld;

#[derive(Clone, Debug)]
pub struct MdpSolution {
    pub values: ValueFunction,
    pub policy: Policy,
    pub iterations: usize,
    pub converged: bool,
    /// Sup-norm change of each sweep.
    pub trace: Vec<f64>,
}

pub(crate) fn value_iteration(
    grid: &GridWorld,
    bank: &PmfBank,
    reward: &RewardModel,
    init: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> MdpSolution {
    let mut v = init;
    let mut next = v.clone();
    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..max_iter {
        let delta = sweep(grid, bank, reward, &v, &mut next);
        std::mem::swap(&mut v, &mut next);
        trace.push(delta);
        if delta <= tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("value iteration stopped at the iteration cap {max_iter}");
    }
    let policy = greedy_policy(grid, bank, reward, &v, tie_tolerance(tol, reward, &v));
    MdpSolution {
        values: ValueFunction {
            values: v,
            epoch: trace.len(),
        },
        policy,
        iterations: trace.len(),
        converged,
        trace,
    }
}

/// Value iteration with every transition model frozen at time `t`.
pub fn mdp_value_iteration(
    problem: &Problem,
    t: f64,
    tol: f64,
    max_iter: usize,
) -> Result<MdpSolution> {
    let bank = PmfBank::at_time(problem, t)?;
    let init = vec![0.0; problem.grid.num_cells()];
    Ok(value_iteration(
        &problem.grid,
        &bank,
        &problem.reward,
        init,
        tol,
        max_iter,
    ))
}
