//! Value iteration for time-varying transition models.
//!
//! Bellman sweeps evaluate every state's transition PMFs at the time the
//! agent is expected to be there (`t0 + t(s0, s)`). Between sweeps, the
//! arrival times are re-estimated under the current greedy policy whenever
//! that policy has held steady for a few sweeps or the values have
//! converged. Times start at zero, so the first sweeps are plain stationary
//! sweeps at `t0`.

use super::{
    chain_pmfs, greedy_policy, sweep, tie_tolerance, PmfBank, Policy, Problem, ValueFunction,
};
use crate::error::{Error, Result};
use crate::gridworld::StateId;
use crate::timing::{
    multi_hop_times, LinearSolveStats, OneHopTable, TimeChain, TransitionTimeTable, WarmStart,
    UNREACHABLE_TIME,
};
use crate::transition::TransitionPmf;

/// Multi-hop times count as settled when no entry moves by more than this
/// fraction between two temporal updates.
pub const TIME_REL_TOL: f64 = 0.01;

/// States reached with lower probability than this are left out of the
/// settle test; their conditional times are dominated by rare detours.
pub const SETTLE_REACH: f64 = 0.01;

/// The temporal channel runs once the greedy policy has stayed the same for
/// this many consecutive sweeps (or the values have converged).
pub const STABLE_SWEEPS: usize = 5;

/// After this many temporal updates the times are frozen even if they
/// still oscillate (e.g. a policy flipping between two near-equal routes).
pub const MAX_TEMPORAL_UPDATES: usize = 50;

#[derive(Clone, Debug)]
pub struct TvmdpSolution {
    pub values: ValueFunction,
    pub policy: Policy,
    pub times: TransitionTimeTable,
    /// Mixture PMFs used by the last temporal update.
    pub chain_pmfs: Vec<TransitionPmf>,
    pub iterations: usize,
    pub converged: bool,
    pub temporal_updates: usize,
    /// Sup-norm value change of each sweep.
    pub trace: Vec<f64>,
    /// Max relative multi-hop change of each temporal update.
    pub time_changes: Vec<f64>,
    pub linear: LinearSolveStats,
    pub t0: f64,
}

struct Temporal {
    one_hop: OneHopTable,
    multi_hop: Vec<f64>,
    reach: Vec<f64>,
    pmfs: Vec<TransitionPmf>,
}

fn temporal_update(
    problem: &Problem,
    bank: &PmfBank,
    policy: &Policy,
    s0: StateId,
    warm: &mut WarmStart,
    stats: &mut LinearSolveStats,
) -> Result<Temporal> {
    let grid = &problem.grid;
    let one_hop = OneHopTable::build(
        grid,
        &problem.field,
        &bank.times,
        &problem.motion,
        problem.timing.eps_vel,
    );
    let pmfs = chain_pmfs(problem, bank, policy)?;
    let chain = TimeChain::from_grid(
        grid,
        &pmfs,
        &one_hop,
        &[grid.goal()],
        problem.motion.duration,
    )?;
    let m = multi_hop_times(s0, &chain, &problem.timing.krylov(), Some(warm))?;
    stats.absorb(&m.stats);
    Ok(Temporal {
        one_hop,
        multi_hop: m.times,
        reach: m.reach,
        pmfs,
    })
}

/// Largest change relative to `max(old, floor)`, over states that are
/// likely to be reached and have a resolved time in both estimates.
pub(crate) fn relative_change(old: &[f64], new: &[f64], reach: &[f64], floor: f64) -> f64 {
    old.iter()
        .zip(new)
        .zip(reach)
        .filter(|((a, b), h)| {
            **a < UNREACHABLE_TIME && **b < UNREACHABLE_TIME && **h >= SETTLE_REACH
        })
        .map(|((&a, &b), _)| (b - a).abs() / a.abs().max(floor))
        .fold(0.0, f64::max)
}

/// Solves the time-varying MDP anchored at state `s0` and time `t0`.
pub fn tvmdp_solve(
    problem: &Problem,
    s0: StateId,
    t0: f64,
    tol: f64,
    max_iter: usize,
) -> Result<TvmdpSolution> {
    problem.check_state(s0)?;
    let grid = &problem.grid;
    let n = grid.num_cells();
    let wrap = |iteration: usize| {
        move |e: Error| Error::Iteration {
            iteration,
            source: Box::new(e),
        }
    };

    let mut times = vec![0.0; n];
    let mut at: Vec<f64> = times.iter().map(|t| t0 + t).collect();
    let mut bank = PmfBank::build(problem, &at).map_err(wrap(0))?;
    let mut v = vec![0.0; n];
    let mut next = v.clone();
    let mut warm = WarmStart::new(n);
    let mut linear = LinearSolveStats::default();

    let mut trace = Vec::new();
    let mut time_changes = Vec::new();
    let mut settled = false;
    // Whether the last temporal update ran on converged values.
    let mut settled_at_fixed_point = false;
    let mut last_policy: Option<Policy> = None;
    let mut temporal: Option<Temporal> = None;
    let mut converged = false;
    let mut policy = Policy::new(Vec::new());

    let mut prev_sweep_policy: Option<Policy> = None;
    let mut stable_for = 0usize;
    let floor = problem.motion.duration;

    for k in 1..=max_iter {
        let delta = sweep(grid, &bank, &problem.reward, &v, &mut next);
        std::mem::swap(&mut v, &mut next);
        trace.push(delta);
        policy = greedy_policy(
            grid,
            &bank,
            &problem.reward,
            &v,
            tie_tolerance(tol, &problem.reward, &v),
        );
        if prev_sweep_policy.as_ref() == Some(&policy) {
            stable_for += 1;
        } else {
            stable_for = 0;
        }

        let frozen = time_changes.len() >= MAX_TEMPORAL_UPDATES;
        let fresh = settled && (settled_at_fixed_point || last_policy.as_ref() == Some(&policy));
        let due = delta <= tol
            || (!settled && stable_for >= STABLE_SWEEPS && last_policy.as_ref() != Some(&policy));
        if due && !fresh && !frozen {
            let update = temporal_update(problem, &bank, &policy, s0, &mut warm, &mut linear)
                .map_err(wrap(k))?;
            let change = relative_change(&times, &update.multi_hop, &update.reach, floor);
            time_changes.push(change);
            settled = change <= TIME_REL_TOL;
            settled_at_fixed_point = delta <= tol;
            times.clone_from(&update.multi_hop);
            for (a, t) in at.iter_mut().zip(&times) {
                *a = t0 + t;
            }
            bank.refresh(problem, &at).map_err(wrap(k))?;
            last_policy = Some(policy.clone());
            temporal = Some(update);
            if time_changes.len() == MAX_TEMPORAL_UPDATES && !settled {
                log::warn!("transition times still moving after {MAX_TEMPORAL_UPDATES} updates; freezing them");
            }
            prev_sweep_policy = Some(policy.clone());
            continue;
        }
        prev_sweep_policy = Some(policy.clone());
        if delta <= tol && (fresh || frozen) {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("time-varying value iteration stopped at the iteration cap {max_iter}");
    }

    let temporal = match temporal {
        Some(t) => t,
        None => temporal_update(problem, &bank, &policy, s0, &mut warm, &mut linear)
            .map_err(wrap(max_iter))?,
    };
    let iterations = trace.len();
    Ok(TvmdpSolution {
        values: ValueFunction {
            values: v,
            epoch: iterations,
        },
        policy,
        times: TransitionTimeTable {
            one_hop: temporal.one_hop,
            multi_hop: times,
            origin: s0,
        },
        chain_pmfs: temporal.pmfs,
        iterations,
        converged,
        temporal_updates: time_changes.len(),
        trace,
        time_changes,
        linear,
        t0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disturbance::{make_spinning, make_uniform};
    use crate::gridworld::GridWorld;
    use crate::solvers::mdp::mdp_value_iteration;
    use crate::solvers::RewardModel;
    use crate::timing::{TimingConfig, UNREACHABLE_TIME};
    use crate::transition::{MotionConfig, NoiseConfig};
    use crate::Vec2;

    fn problem(field: crate::TimeVaryingField, side: usize) -> Problem {
        let grid = GridWorld::square(side, 1.0, side * side - 1).unwrap();
        let motion = MotionConfig::nominal(&grid, 1.0, NoiseConfig::default_for(1.0)).unwrap();
        Problem::new(
            grid,
            field,
            motion,
            RewardModel::default(),
            TimingConfig::default(),
        )
        .unwrap()
    }

    #[test]
    fn static_field_matches_mdp() {
        let p = problem(make_uniform(Vec2::new(0.2, -0.1)), 5);
        let tv = tvmdp_solve(&p, 0, 0.0, 1e-8, 5000).unwrap();
        let mdp = mdp_value_iteration(&p, 0.0, 1e-8, 5000).unwrap();
        assert!(tv.converged);
        assert_eq!(tv.policy, mdp.policy);
        assert_eq!(tv.times.multi_hop[0], 0.0);
    }

    #[test]
    fn times_are_finite_and_anchored() {
        let p = problem(make_spinning(0.3, 0.2).unwrap(), 5);
        let tv = tvmdp_solve(&p, 6, 1.0, 1e-6, 5000).unwrap();
        assert_eq!(tv.times.multi_hop[6], 0.0);
        for s in p.grid.states() {
            let t = tv.times.multi_hop[s];
            assert!(t.is_finite() && t >= 0.0);
            if s != 6 && t < UNREACHABLE_TIME {
                assert!(t > 0.0);
            }
        }
        assert!(tv.temporal_updates >= 1);
        assert!(tv.linear.systems > 0);
    }
}
