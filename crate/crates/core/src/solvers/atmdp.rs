//! Prioritized-sweeping planner with greedy time lookahead.
//!
//! Arrival times are approximated without linear systems: starting at `s0`,
//! follow the current policy's first action to its intended successor and
//! accumulate one-hop times. States off that chain take the time of the
//! nearest chain state plus straight-line travel at full speed.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{
    backup, bellman_residual, greedy_policy, tie_tolerance, PmfBank, Policy, Problem, ValueFunction,
};
use crate::error::Result;
use crate::gridworld::StateId;
use crate::timing::one_hop_time;

/// Rounds of (sweep to convergence, refresh lookahead times).
pub const MAX_ROUNDS: usize = 10;

#[derive(Clone, Debug)]
pub struct AtmdpSolution {
    pub values: ValueFunction,
    pub policy: Policy,
    /// Greedy lookahead times `t(s0, s)`.
    pub times: Vec<f64>,
    pub rounds: usize,
    /// Single-state backups performed.
    pub backups: usize,
    /// Final sup-norm Bellman residual.
    pub residual: f64,
    pub converged: bool,
}

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    priority: f64,
    state: StateId,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority
            .total_cmp(&other.priority)
            .then_with(|| other.state.cmp(&self.state))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Queue {
    heap: BinaryHeap<Entry>,
    queued: Vec<f64>,
}

impl Queue {
    fn new(n: usize) -> Self {
        Queue {
            heap: BinaryHeap::new(),
            queued: vec![0.0; n],
        }
    }

    fn push(&mut self, state: StateId, priority: f64) {
        if priority > self.queued[state] {
            self.queued[state] = priority;
            self.heap.push(Entry { priority, state });
        }
    }

    fn pop(&mut self) -> Option<StateId> {
        while let Some(e) = self.heap.pop() {
            if e.priority == self.queued[e.state] {
                self.queued[e.state] = 0.0;
                return Some(e.state);
            }
        }
        None
    }
}

/// Times along the greedy chain from `s0`, extended to all states.
pub fn greedy_times(problem: &Problem, policy: &Policy, s0: StateId, t0: f64) -> Result<Vec<f64>> {
    let grid = &problem.grid;
    let n = grid.num_cells();
    let mut times = vec![f64::NAN; n];
    let mut chain = Vec::new();
    let (mut s, mut t) = (s0, 0.0);
    loop {
        times[s] = t;
        chain.push(s);
        if s == grid.goal() {
            break;
        }
        let Some(a) = policy.actions(s).first() else {
            break;
        };
        let Some(&(_, next)) = grid.neighbors(s)?.iter().find(|e| e.0 == a) else {
            break;
        };
        if next == s || !times[next].is_nan() {
            break;
        }
        let hop = one_hop_time(
            grid,
            s,
            next,
            &problem.field,
            t0 + t,
            &problem.motion,
            problem.timing.eps_vel,
        )?
        .unwrap_or(problem.motion.duration);
        t += hop;
        s = next;
    }
    for s in grid.states() {
        if !times[s].is_nan() {
            continue;
        }
        let x = grid.state_center(s)?;
        let (c, d) = chain
            .iter()
            .map(|&c| {
                (
                    c,
                    (grid.state_center(c).expect("valid chain state") - x).norm(),
                )
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("chain contains s0");
        times[s] = times[c] + d / problem.motion.speed;
    }
    for t in &mut times {
        if t.is_nan() {
            *t = 0.0;
        }
    }
    Ok(times)
}

fn relative_change(old: &[f64], new: &[f64]) -> f64 {
    old.iter()
        .zip(new)
        .map(|(&a, &b)| {
            if a == b {
                0.0
            } else {
                (b - a).abs() / a.abs().max(1e-9)
            }
        })
        .fold(0.0, f64::max)
}

/// Prioritized sweeping until the sup-norm Bellman residual is at most `tol`.
/// `max_iter` caps the number of single-state backups at `max_iter * |S|`.
pub fn atmdp_solve(
    problem: &Problem,
    s0: StateId,
    t0: f64,
    tol: f64,
    max_iter: usize,
) -> Result<AtmdpSolution> {
    problem.check_state(s0)?;
    let grid = &problem.grid;
    let reward = &problem.reward;
    let n = grid.num_cells();
    let gamma = reward.discount;
    let budget = max_iter.saturating_mul(grid.num_states().max(1));

    let mut preds: Vec<Vec<StateId>> = vec![Vec::new(); n];
    for s in grid.states() {
        for &(_, j) in grid.neighbors(s)? {
            preds[j].push(s);
        }
    }

    let mut times = vec![0.0; n];
    let at = |times: &[f64]| times.iter().map(|t| t0 + t).collect::<Vec<_>>();
    let mut bank = PmfBank::build(problem, &at(&times))?;
    let mut v = vec![0.0; n];
    let mut queue = Queue::new(n);
    let mut backups = 0;
    let mut prev_policy: Option<Policy> = None;
    let mut policy = Policy::new(Vec::new());
    let mut residual = f64::INFINITY;
    let mut converged = false;
    let mut rounds = 0;

    for round in 1..=MAX_ROUNDS {
        rounds = round;
        if round == 1 {
            queue.push(grid.goal(), f64::MAX);
            for &p in &preds[grid.goal()] {
                queue.push(p, f64::MAX);
            }
        }
        loop {
            while let Some(s) = queue.pop() {
                if backups >= budget {
                    break;
                }
                let new = backup(grid, &bank, reward, s, &v);
                let change = (new - v[s]).abs();
                v[s] = new;
                backups += 1;
                if change == 0.0 {
                    continue;
                }
                for &p in &preds[s] {
                    let reach = bank
                        .actions(p)
                        .iter()
                        .map(|pmf| pmf.probability(s))
                        .fold(0.0, f64::max);
                    let priority = gamma * reach * change;
                    if priority > tol {
                        queue.push(p, priority);
                    }
                }
            }
            // The queue only bounds the residual from above through
            // propagated changes; confirm with a full check.
            let mut worst: f64 = 0.0;
            for s in grid.states() {
                let r = (backup(grid, &bank, reward, s, &v) - v[s]).abs();
                worst = worst.max(r);
                if r > tol {
                    queue.push(s, r);
                }
            }
            residual = worst;
            if worst <= tol || backups >= budget {
                break;
            }
        }
        policy = greedy_policy(grid, &bank, reward, &v, tie_tolerance(tol, reward, &v));
        let new_times = greedy_times(problem, &policy, s0, t0)?;
        let change = relative_change(&times, &new_times);
        let stable = prev_policy.as_ref() == Some(&policy) && change <= super::tvmdp::TIME_REL_TOL;
        if residual <= tol && stable {
            converged = true;
            break;
        }
        if backups >= budget {
            log::warn!("prioritized sweeping hit the backup budget {budget}");
            break;
        }
        times = new_times;
        bank.refresh(problem, &at(&times))?;
        prev_policy = Some(policy.clone());
        residual = bellman_residual(grid, &bank, reward, &v);
    }

    Ok(AtmdpSolution {
        values: ValueFunction {
            values: v,
            epoch: backups,
        },
        policy,
        times,
        rounds,
        backups,
        residual,
        converged,
    })
}
