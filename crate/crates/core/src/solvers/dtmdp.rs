//! Time-layered MDP: the state space is copied into `L` layers spaced
//! `dt = horizon / (L - 1)` apart, and a hop moves forward by its one-hop
//! time rounded to whole layers. The last layer holds its field forever.

use super::{tie_tolerance, PmfBank, Policy, Problem};
use crate::error::{Error, Result};
use crate::gridworld::{ActionSet, StateId};
use crate::timing::OneHopTable;

#[derive(Clone, Debug, PartialEq)]
pub struct LayeredPolicy {
    pub layers: Vec<Policy>,
    pub t_start: f64,
    pub dt: f64,
}

impl LayeredPolicy {
    pub fn layer_at(&self, t: f64) -> usize {
        let k = ((t - self.t_start) / self.dt).round();
        if k.is_nan() || k <= 0.0 {
            0
        } else {
            (k as usize).min(self.layers.len() - 1)
        }
    }

    pub fn actions(&self, s: StateId, t: f64) -> ActionSet {
        self.layers[self.layer_at(t)].actions(s)
    }
}

#[derive(Clone, Debug)]
pub struct DtmdpSolution {
    /// `values[layer][cell]`.
    pub values: Vec<Vec<f64>>,
    pub policy: LayeredPolicy,
    pub iterations: usize,
    pub converged: bool,
    /// |S| * layers.
    pub num_states: usize,
}

/// Transition into layered state `layer * n + cell`.
#[derive(Clone, Copy)]
struct Hop {
    index: u32,
    probability: f64,
    reward: f64,
}

/// Layer advance for a hop taking `hop` seconds.
fn advance(hop: f64, dt: f64, idle: bool) -> usize {
    let k = (hop / dt).round().max(0.0) as usize;
    if idle {
        k
    } else {
        k.max(1)
    }
}

pub fn dtmdp_solve(
    problem: &Problem,
    t0: f64,
    horizon: f64,
    layers: usize,
    tol: f64,
    max_iter: usize,
    max_states: usize,
) -> Result<DtmdpSolution> {
    if layers < 2 {
        return Err(Error::InvalidParameter(format!(
            "layers must be >= 2, got {layers}"
        )));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    let grid = &problem.grid;
    let reward = &problem.reward;
    let n = grid.num_cells();
    let num_states = grid.num_states() * layers;
    if num_states > max_states || n.saturating_mul(layers) > u32::MAX as usize {
        return Err(Error::TooLarge {
            states: num_states,
            cap: max_states,
        });
    }
    let dt = horizon / (layers - 1) as f64;
    let fallback = problem.motion.duration;

    // hops[layer][cell][action] -> outgoing layered transitions.
    let mut hops: Vec<Vec<Vec<Vec<Hop>>>> = Vec::with_capacity(layers);
    for layer in 0..layers {
        let t = t0 + layer as f64 * dt;
        let bank = PmfBank::at_time(problem, t)?;
        let one_hop = OneHopTable::build(
            grid,
            &problem.field,
            &vec![t; n],
            &problem.motion,
            problem.timing.eps_vel,
        );
        let mut per_cell = vec![Vec::new(); n];
        for s in grid.states() {
            per_cell[s] = grid
                .neighbors(s)?
                .iter()
                .zip(bank.actions(s))
                .map(|(&(a, _), pmf)| {
                    pmf.entries
                        .iter()
                        .filter(|e| e.1 > 0.0)
                        .map(|&(j, p)| {
                            let next_layer = if layer + 1 == layers || s == grid.goal() {
                                layer
                            } else {
                                let hop = if j == s {
                                    problem.motion.dwell_time(grid)
                                } else {
                                    one_hop.get(s, j).unwrap_or(fallback)
                                };
                                (layer + advance(hop, dt, a.is_idle())).min(layers - 1)
                            };
                            Hop {
                                index: (next_layer * n + j) as u32,
                                probability: p,
                                reward: reward.reward(grid.goal(), j),
                            }
                        })
                        .collect()
                })
                .collect();
        }
        hops.push(per_cell);
    }

    let q = |hops: &[Hop], v: &[f64]| -> f64 {
        hops.iter()
            .map(|h| h.probability * (h.reward + reward.discount * v[h.index as usize]))
            .sum()
    };
    let mut v = vec![0.0; n * layers];
    let mut next = v.clone();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let mut delta: f64 = 0.0;
        for (layer, per_cell) in hops.iter().enumerate() {
            for s in grid.states() {
                let i = layer * n + s;
                next[i] = per_cell[s]
                    .iter()
                    .map(|h| q(h, &v))
                    .fold(f64::NEG_INFINITY, f64::max);
                delta = delta.max((next[i] - v[i]).abs());
            }
        }
        std::mem::swap(&mut v, &mut next);
        if delta <= tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("time-layered value iteration stopped at the iteration cap {max_iter}");
    }

    // Policies per layer from the layered Q-values.
    let tie_tol = tie_tolerance(tol, reward, &v);
    let mut policies = Vec::with_capacity(layers);
    for per_cell in hops.iter() {
        let mut sets = vec![ActionSet::EMPTY; n];
        for s in grid.states() {
            let qs: Vec<f64> = per_cell[s].iter().map(|h| q(h, &v)).collect();
            let best = qs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            sets[s] = grid
                .neighbors(s)?
                .iter()
                .zip(&qs)
                .filter(|(_, &qa)| qa >= best - tie_tol)
                .map(|(&(a, _), _)| a)
                .collect();
        }
        policies.push(Policy::new(sets));
    }
    Ok(DtmdpSolution {
        values: v.chunks(n).map(|c| c.to_vec()).collect(),
        policy: LayeredPolicy {
            layers: policies,
            t_start: t0,
            dt,
        },
        iterations,
        converged,
        num_states,
    })
}
