//! Real-valued transition-time estimation.
//!
//! One-hop times come from the Gaussian motion model: the displacement
//! distribution is rotated so the direction toward the target lies on the
//! first axis, and the conditional mean of the along-track component given
//! zero cross-track deviation gives the expected velocity toward the target.
//!
//! Multi-hop times from the agent's state `s0` come from first-step
//! (Kolmogorov) linear systems, one per end state:
//!
//! ```text
//! t(s_i, s_e) = sum_j p_ij * (t(s_i, s_j) + t(s_j, s_e)),    t(s_e, s_e) = 0
//! ```
//!
//! When the chain has absorbing states other than `s_e` (the goal), the
//! unconditional hitting time is infinite for any end state that is not
//! visited almost surely. We then report the arrival time conditional on
//! reaching `s_e`: a first system gives the reach probabilities `h`, and a
//! second system with the same matrix and right-hand side
//! `sum_j p_ij h_j t(s_i, s_j)` gives `u = h * t`. Without extra absorbing
//! states `h == 1` and the second system is exactly the one above.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::disturbance::TimeVaryingField;
use crate::error::{Error, Result};
use crate::gridworld::{GridWorld, StateId};
use crate::linalg::{banded_lu_solve, bicgstab, norm2, CsrMatrix, KrylovOptions};
use crate::transition::{MotionConfig, TransitionModel, TransitionPmf};
use crate::Vec2;

/// Time assigned to states the agent cannot reach under the current policy.
pub const UNREACHABLE_TIME: f64 = 1e6;

/// Reach probabilities below this count as unreachable: at the default
/// solver tolerance the conditional time of such a rare arrival is not
/// resolved.
pub const MIN_REACH_PROBABILITY: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimingConfig {
    /// Relative residual target of the sparse solver.
    pub solver_tol: f64,
    /// Iteration cap as a multiple of |S|.
    pub max_iter_factor: usize,
    /// Minimum along-track displacement (m) over one motion step.
    pub eps_vel: f64,
    /// Distribution used for the chain's transition probabilities.
    pub chain_model: TransitionModel,
}

impl Default for TimingConfig {
    fn default() -> Self {
        TimingConfig {
            solver_tol: 1e-8,
            max_iter_factor: 10,
            eps_vel: 1e-6,
            chain_model: TransitionModel::Synergistic,
        }
    }
}

impl TimingConfig {
    pub fn krylov(&self) -> KrylovOptions {
        KrylovOptions {
            tol: self.solver_tol,
            max_iter_factor: self.max_iter_factor,
        }
    }
}

/// Expected time for the hop `s -> target` starting at time `t`.
///
/// `Ok(None)` marks the pair unreachable: no admissible action makes
/// positive progress toward the target against the disturbance. Staying in
/// place (`target == s`) costs the idle dwell time.
pub fn one_hop_time(
    grid: &GridWorld,
    s: StateId,
    target: StateId,
    field: &TimeVaryingField,
    t: f64,
    motion: &MotionConfig,
    eps_vel: f64,
) -> Result<Option<f64>> {
    let x = grid.state_center(s)?;
    if target == s {
        return Ok(Some(motion.dwell_time(grid)));
    }
    if !grid.is_neighbor(s, target) {
        return Err(Error::NotNeighbor { from: s, target });
    }
    let d = field.query(x, t);
    Ok(hop_time_between(
        grid,
        s,
        x,
        grid.center_unchecked(target),
        d,
        motion,
        eps_vel,
    ))
}

fn hop_time_between(
    grid: &GridWorld,
    s: StateId,
    from: Vec2,
    to: Vec2,
    disturbance: Vec2,
    motion: &MotionConfig,
    eps_vel: f64,
) -> Option<f64> {
    let offset = to - from;
    let dist = offset.norm();
    let dir = offset / dist;

    // Action whose resultant velocity points closest to the target.
    let mut best: Option<(f64, Vec2)> = None;
    for &(a, _) in grid.neighbors_unchecked(s) {
        let r = a.velocity(motion.speed) + disturbance;
        let rn = r.norm();
        if rn == 0.0 {
            continue;
        }
        let along = r.dot(&dir);
        if along <= 0.0 {
            continue;
        }
        let cos = along / rn;
        if best.is_none_or(|(c, _)| cos > c) {
            best = Some((cos, r));
        }
    }
    let (_, resultant) = best?;

    // In the frame rotated onto the resultant the cross-track mean is zero,
    // so the along-track mean conditioned on zero cross-track displacement
    // is the resultant's length whatever the covariance.
    let expected = resultant.norm();
    if expected * motion.duration <= eps_vel {
        return None;
    }
    Some(dist / expected)
}

/// One-hop times for every `(s, s')` with `s' in N(s)`, in neighbor order.
/// Unreachable pairs hold `f64::INFINITY`.
#[derive(Clone, Debug, PartialEq)]
pub struct OneHopTable {
    times: Vec<Vec<(StateId, f64)>>,
}

impl OneHopTable {
    /// Evaluates every state's hops at its own absolute time `at[s]`.
    pub fn build(
        grid: &GridWorld,
        field: &TimeVaryingField,
        at: &[f64],
        motion: &MotionConfig,
        eps_vel: f64,
    ) -> Self {
        let dwell = motion.dwell_time(grid);
        let times = (0..grid.num_cells())
            .map(|s| {
                if grid.is_blocked(s) {
                    return Vec::new();
                }
                let x = grid.center_unchecked(s);
                let d = field.query(x, at[s]);
                grid.neighbors_unchecked(s)
                    .iter()
                    .map(|&(_, n)| {
                        let t = if n == s {
                            Some(dwell)
                        } else {
                            hop_time_between(
                                grid,
                                s,
                                x,
                                grid.center_unchecked(n),
                                d,
                                motion,
                                eps_vel,
                            )
                        };
                        (n, t.unwrap_or(f64::INFINITY))
                    })
                    .collect()
            })
            .collect();
        OneHopTable { times }
    }

    /// `None` when `target` is not a neighbor or the hop is unreachable.
    pub fn get(&self, s: StateId, target: StateId) -> Option<f64> {
        self.times
            .get(s)?
            .iter()
            .find(|e| e.0 == target)
            .map(|e| e.1)
            .filter(|t| t.is_finite())
    }

    pub fn row(&self, s: StateId) -> &[(StateId, f64)] {
        &self.times[s]
    }

    pub fn scaled(&self, k: f64) -> Self {
        OneHopTable {
            times: self
                .times
                .iter()
                .map(|row| row.iter().map(|&(n, t)| (n, t * k)).collect())
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChainEntry {
    pub target: StateId,
    pub probability: f64,
    /// Time of the hop; finite.
    pub time: f64,
}

/// Markov chain with real-valued hop times, induced by a policy.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeChain {
    rows: Vec<Vec<ChainEntry>>,
    absorbing: Vec<bool>,
    inactive: Vec<bool>,
}

impl TimeChain {
    /// `rows[i]` lists outgoing transitions of state `i`. Absorbing states keep
    /// their rows (used for their one-hop times) but never transition.
    pub fn new(rows: Vec<Vec<ChainEntry>>, absorbing: &[StateId]) -> Result<Self> {
        let n = rows.len();
        let mut flags = vec![false; n];
        for &a in absorbing {
            *flags.get_mut(a).ok_or(Error::InvalidState(a))? = true;
        }
        for (i, row) in rows.iter().enumerate() {
            for e in row {
                if e.target >= n {
                    return Err(Error::InvalidState(e.target));
                }
                if !(e.probability >= 0.0 && e.time.is_finite() && e.time >= 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "bad chain entry {i} -> {}: p={} t={}",
                        e.target, e.probability, e.time
                    )));
                }
            }
        }
        Ok(TimeChain {
            rows,
            absorbing: flags,
            inactive: vec![false; n],
        })
    }

    /// Chain of a grid policy: `pmfs[s]` is the policy's PMF at `s` (ignored
    /// for blocked cells and absorbing states). Unreachable hops that still
    /// carry probability mass are charged `unreachable_hop` seconds.
    pub fn from_grid(
        grid: &GridWorld,
        pmfs: &[TransitionPmf],
        one_hop: &OneHopTable,
        absorbing: &[StateId],
        unreachable_hop: f64,
    ) -> Result<Self> {
        let n = grid.num_cells();
        if pmfs.len() != n {
            return Err(Error::MissingPmf(pmfs.len().min(n)));
        }
        let mut rows = Vec::with_capacity(n);
        for (s, pmf) in pmfs.iter().enumerate() {
            if grid.is_blocked(s) {
                rows.push(Vec::new());
                continue;
            }
            if pmf.source != s {
                return Err(Error::MissingPmf(s));
            }
            let row = one_hop
                .row(s)
                .iter()
                .map(|&(target, t)| ChainEntry {
                    target,
                    probability: pmf.probability(target),
                    time: if t.is_finite() { t } else { unreachable_hop },
                })
                .collect();
            rows.push(row);
        }
        let mut chain = TimeChain::new(rows, absorbing)?;
        for s in grid.blocked_cells() {
            chain.absorbing[s] = true;
            chain.inactive[s] = true;
        }
        Ok(chain)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, s: StateId) -> &[ChainEntry] {
        &self.rows[s]
    }

    pub fn is_absorbing(&self, s: StateId) -> bool {
        self.absorbing[s]
    }

    fn is_stuck(&self, s: StateId) -> bool {
        let leave: f64 = self.rows[s]
            .iter()
            .filter(|e| e.target != s)
            .map(|e| e.probability)
            .sum();
        leave <= 1e-12
    }

    /// Absorbing, inactive or self-trapped: never transitions.
    fn is_terminal(&self, s: StateId) -> bool {
        self.absorbing[s] || self.is_stuck(s)
    }

    fn has_extra_terminals(&self, end_state: StateId) -> bool {
        (0..self.len()).any(|s| s != end_state && self.is_terminal(s))
    }

    /// States that can reach `end_state` through positive-probability hops.
    fn can_reach(&self, end_state: StateId) -> Vec<bool> {
        let n = self.len();
        let mut preds: Vec<Vec<StateId>> = vec![Vec::new(); n];
        for (i, row) in self.rows.iter().enumerate() {
            if self.is_terminal(i) {
                continue;
            }
            for e in row {
                if e.probability > 0.0 && e.target != i {
                    preds[e.target].push(i);
                }
            }
        }
        let mut seen = vec![false; n];
        let mut stack = vec![end_state];
        seen[end_state] = true;
        while let Some(j) = stack.pop() {
            for &i in &preds[j] {
                if !seen[i] {
                    seen[i] = true;
                    stack.push(i);
                }
            }
        }
        seen
    }
}

/// First-step linear system `A x = b` for one end state.
#[derive(Clone, Debug, PartialEq)]
pub struct KolmogorovSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub end_state: StateId,
}

enum RowKind {
    End,
    Dead,
    Regular,
}

fn row_kinds(chain: &TimeChain, end_state: StateId) -> Vec<RowKind> {
    let reach = chain.can_reach(end_state);
    (0..chain.len())
        .map(|i| {
            if i == end_state {
                RowKind::End
            } else if chain.is_terminal(i) || !reach[i] {
                RowKind::Dead
            } else {
                RowKind::Regular
            }
        })
        .collect()
}

fn build_matrix(chain: &TimeChain, kinds: &[RowKind]) -> CsrMatrix {
    let rows = kinds.iter().enumerate().map(|(i, kind)| match kind {
        RowKind::End | RowKind::Dead => vec![(i, 1.0)],
        RowKind::Regular => {
            let mut row = Vec::with_capacity(chain.rows[i].len() + 1);
            row.push((i, 1.0));
            row.extend(
                chain.rows[i]
                    .iter()
                    .filter(|e| e.probability > 0.0)
                    .map(|e| (e.target, -e.probability)),
            );
            row
        }
    });
    CsrMatrix::from_rows(chain.len(), rows)
}

/// Unconditional hitting-time system for `end_state`.
///
/// The end-state row is the identity with zero right-hand side. Rows of
/// states that can never reach `end_state` (absorbing, trapped, or cut off)
/// are identity rows carrying [`UNREACHABLE_TIME`].
pub fn assemble_system(end_state: StateId, chain: &TimeChain) -> Result<KolmogorovSystem> {
    if end_state >= chain.len() {
        return Err(Error::InvalidState(end_state));
    }
    let kinds = row_kinds(chain, end_state);
    let matrix = build_matrix(chain, &kinds);
    let rhs = kinds
        .iter()
        .enumerate()
        .map(|(i, kind)| match kind {
            RowKind::End => 0.0,
            RowKind::Dead => UNREACHABLE_TIME,
            RowKind::Regular => chain.rows[i].iter().map(|e| e.probability * e.time).sum(),
        })
        .collect();
    Ok(KolmogorovSystem {
        matrix,
        rhs,
        end_state,
    })
}

/// Reach-probability system: `h(end) = 1`, `h = 0` on dead rows, `h = P h` elsewhere.
fn assemble_reach_system(
    end_state: StateId,
    chain: &TimeChain,
    kinds: &[RowKind],
) -> KolmogorovSystem {
    let matrix = build_matrix(chain, kinds);
    let rhs = kinds
        .iter()
        .map(|k| if matches!(k, RowKind::End) { 1.0 } else { 0.0 })
        .collect();
    KolmogorovSystem {
        matrix,
        rhs,
        end_state,
    }
}

fn conditional_rhs(chain: &TimeChain, kinds: &[RowKind], reach: &[f64]) -> Vec<f64> {
    kinds
        .iter()
        .enumerate()
        .map(|(i, kind)| match kind {
            RowKind::Regular => chain.rows[i]
                .iter()
                .map(|e| e.probability * reach[e.target] * e.time)
                .sum(),
            _ => 0.0,
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct SystemSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    /// Entries below `-tol` that were clamped to zero.
    pub clamped: usize,
    /// Accepted on backward error; see [`SolveReport`].
    pub precision_limited: bool,
    /// Solved by the banded direct fallback.
    pub direct: bool,
}

/// Solves a Kolmogorov system with the sparse Krylov solver, falling back
/// to a banded direct solve if the iteration stalls. Small negative entries
/// (round-off) are clamped to zero; those below `-tol` are counted.
pub fn solve_system(
    sys: &KolmogorovSystem,
    opts: &KrylovOptions,
    warm: Option<&[f64]>,
) -> Result<SystemSolution> {
    let (mut x, iterations, residual, precision_limited, direct) = match bicgstab(
        &sys.matrix,
        &sys.rhs,
        warm,
        opts,
    ) {
        Ok(r) => (r.x, r.iterations, r.residual, r.precision_limited, false),
        Err(Error::NoConvergence {
            iterations,
            residual,
        }) => {
            log::warn!(
                "Krylov solve for end state {} stalled at residual {residual:e}; using banded LU",
                sys.end_state
            );
            let x = banded_lu_solve(&sys.matrix, &sys.rhs).map_err(|_| Error::NoConvergence {
                iterations,
                residual,
            })?;
            let ax = sys.matrix.mul_vec(&x);
            let r: Vec<f64> = ax.iter().zip(&sys.rhs).map(|(a, b)| a - b).collect();
            let rel = norm2(&r) / norm2(&sys.rhs).max(f64::MIN_POSITIVE);
            (x, iterations, rel, rel > opts.tol * 10.0, true)
        }
        Err(e) => return Err(e),
    };
    let mut clamped = 0;
    for v in &mut x {
        if *v < 0.0 {
            if *v < -opts.tol {
                clamped += 1;
            }
            *v = 0.0;
        }
    }
    if clamped > 0 {
        log::warn!(
            "clamped {clamped} negative entries for end state {}",
            sys.end_state
        );
    }
    Ok(SystemSolution {
        x,
        iterations,
        residual,
        clamped,
        precision_limited,
        direct,
    })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearSolveStats {
    pub systems: usize,
    pub iterations: usize,
    pub clamped: usize,
    /// Systems accepted on backward error rather than residual.
    pub precision_limited: usize,
    /// Systems that fell back to the direct solver.
    pub direct: usize,
    pub elapsed: Duration,
}

impl LinearSolveStats {
    pub fn absorb(&mut self, other: &LinearSolveStats) {
        self.systems += other.systems;
        self.iterations += other.iterations;
        self.clamped += other.clamped;
        self.precision_limited += other.precision_limited;
        self.direct += other.direct;
        self.elapsed += other.elapsed;
    }
}

/// Previous solutions per end state, used as initial guesses.
#[derive(Clone, Debug, Default)]
pub struct WarmStart {
    reach: Vec<Option<Vec<f64>>>,
    weighted: Vec<Option<Vec<f64>>>,
}

impl WarmStart {
    pub fn new(n: usize) -> Self {
        WarmStart {
            reach: vec![None; n],
            weighted: vec![None; n],
        }
    }
}

/// Multi-hop arrival time of `end_state` from `s0` via the linear systems.
/// Returns [`UNREACHABLE_TIME`] when `end_state` cannot be reached.
pub fn hitting_time(
    s0: StateId,
    end_state: StateId,
    chain: &TimeChain,
    opts: &KrylovOptions,
    warm: Option<&mut WarmStart>,
    stats: &mut LinearSolveStats,
) -> Result<f64> {
    hitting(s0, end_state, chain, opts, warm, stats).map(|(t, _)| t)
}

/// Conditional hitting time and the probability of reaching `end_state`.
fn hitting(
    s0: StateId,
    end_state: StateId,
    chain: &TimeChain,
    opts: &KrylovOptions,
    warm: Option<&mut WarmStart>,
    stats: &mut LinearSolveStats,
) -> Result<(f64, f64)> {
    if s0 == end_state {
        return Ok((0.0, 1.0));
    }
    let kinds = row_kinds(chain, end_state);
    if !matches!(kinds[s0], RowKind::Regular) {
        return Ok((UNREACHABLE_TIME, 0.0));
    }
    let wrap = |e| Error::EndState {
        end_state,
        source: Box::new(e),
    };
    let (mut warm_reach, mut warm_weighted) = (None, None);
    let mut warm = warm;
    if let Some(w) = warm.as_deref_mut() {
        warm_reach = w.reach[end_state].take();
        warm_weighted = w.weighted[end_state].take();
    }

    let extra_terminals =
        chain.has_extra_terminals(end_state) || kinds.iter().any(|k| matches!(k, RowKind::Dead));
    let reach = if extra_terminals {
        let sys = assemble_reach_system(end_state, chain, &kinds);
        let sol = solve_system(&sys, opts, warm_reach.as_deref()).map_err(wrap)?;
        stats.systems += 1;
        stats.iterations += sol.iterations;
        stats.clamped += sol.clamped;
        stats.precision_limited += usize::from(sol.precision_limited);
        stats.direct += usize::from(sol.direct);
        sol.x
    } else {
        vec![1.0; chain.len()]
    };
    let h0 = reach[s0];
    if h0 < MIN_REACH_PROBABILITY {
        if let Some(w) = warm {
            w.reach[end_state] = Some(reach);
        }
        return Ok((UNREACHABLE_TIME, h0));
    }
    let sys = KolmogorovSystem {
        matrix: build_matrix(chain, &kinds),
        rhs: conditional_rhs(chain, &kinds, &reach),
        end_state,
    };
    let sol = solve_system(&sys, opts, warm_weighted.as_deref()).map_err(wrap)?;
    stats.systems += 1;
    stats.iterations += sol.iterations;
    stats.clamped += sol.clamped;
    stats.precision_limited += usize::from(sol.precision_limited);
    stats.direct += usize::from(sol.direct);
    let t = (sol.x[s0] / h0).min(UNREACHABLE_TIME);
    if let Some(w) = warm {
        if extra_terminals {
            w.reach[end_state] = Some(reach);
        }
        w.weighted[end_state] = Some(sol.x);
    }
    Ok((t, h0))
}

#[derive(Clone, Debug)]
pub struct MultiHopTimes {
    pub times: Vec<f64>,
    /// Probability of reaching each state from `s0` before another
    /// absorbing state. Neighbors of `s0` count as reached.
    pub reach: Vec<f64>,
    pub stats: LinearSolveStats,
}

/// Arrival times from `s0` to every state: zero at `s0`, the one-hop time
/// for direct neighbors, and a linear-system solution for all others.
pub fn multi_hop_times(
    s0: StateId,
    chain: &TimeChain,
    opts: &KrylovOptions,
    mut warm: Option<&mut WarmStart>,
) -> Result<MultiHopTimes> {
    if s0 >= chain.len() {
        return Err(Error::InvalidState(s0));
    }
    let start = Instant::now();
    let mut stats = LinearSolveStats::default();
    let mut times = vec![UNREACHABLE_TIME; chain.len()];
    let mut reach = vec![0.0; chain.len()];
    times[s0] = 0.0;
    reach[s0] = 1.0;
    for end_state in 0..chain.len() {
        if end_state == s0 || chain.inactive[end_state] {
            continue;
        }
        if let Some(e) = chain.rows[s0].iter().find(|e| e.target == end_state) {
            times[end_state] = e.time;
            reach[end_state] = 1.0;
            continue;
        }
        (times[end_state], reach[end_state]) =
            hitting(s0, end_state, chain, opts, warm.as_deref_mut(), &mut stats)?;
    }
    stats.elapsed = start.elapsed();
    Ok(MultiHopTimes {
        times,
        reach,
        stats,
    })
}

/// One-hop and multi-hop times for the current policy.
#[derive(Clone, Debug)]
pub struct TransitionTimeTable {
    pub one_hop: OneHopTable,
    /// `t(s0, s)` for every cell id.
    pub multi_hop: Vec<f64>,
    pub origin: StateId,
}
