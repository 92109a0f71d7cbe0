//! Stochastic rollouts of a planner under the Gaussian motion model.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::{Duration, Instant};

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::{Action, StateId};
use crate::solvers::{PlanPolicy, Planner, Problem};
use crate::transition::{motion_model_at, TransitionPmf};
use crate::Vec2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub position: Vec2,
    pub state: StateId,
    /// Action taken from this sample; `None` on the last one.
    pub action: Option<Action>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    ReachedGoal,
    Timeout,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub outcome: Outcome,
}

impl Trajectory {
    /// Writes `t,x,y,state,action` rows; the action column holds the action id.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,x,y,state,action")?;
        for s in &self.samples {
            let action = s.action.map(|a| a.id().to_string()).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{}",
                s.t, s.position.x, s.position.y, s.state, action
            )?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// Meters travelled.
    pub path_length: f64,
    /// Seconds from start to goal (or timeout).
    pub travel_time: f64,
    /// Wall-clock seconds spent planning.
    pub compute_time: f64,
    /// Plans made after the initial one.
    pub replan_count: usize,
    /// Wall-clock seconds inside the temporal channel's linear solves.
    pub linear_solve_time: f64,
    pub steps: usize,
    pub reached_goal: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RolloutConfig {
    pub start: StateId,
    pub t0: f64,
    pub seed: u64,
    /// Step limit; defaults to `50 * |S|`.
    pub timeout_steps: Option<usize>,
    /// Hops between replans; `None` plans once.
    pub replan_interval: Option<usize>,
}

/// Simulates from the center of `start` until the goal cell is entered or
/// the step limit is hit. Each step lasts one motion duration.
pub fn rollout(
    planner: &mut dyn Planner,
    problem: &Problem,
    cfg: &RolloutConfig,
) -> Result<(Trajectory, RunMetrics)> {
    let grid = &problem.grid;
    let dt = problem.motion.duration;
    let timeout = cfg.timeout_steps.unwrap_or(50 * grid.num_states());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut pos = grid.state_center(cfg.start)?;
    let mut s = cfg.start;
    let mut t = cfg.t0;
    let mut samples = vec![Sample {
        t,
        position: pos,
        state: s,
        action: None,
    }];
    let mut metrics = RunMetrics::default();
    let mut compute = Duration::ZERO;
    let mut linear = Duration::ZERO;
    let mut plans = 0usize;
    let mut policy: Option<PlanPolicy> = None;
    let mut since_plan = 0usize;

    let mut outcome = if s == grid.goal() {
        Outcome::ReachedGoal
    } else {
        Outcome::Timeout
    };
    while outcome == Outcome::Timeout && metrics.steps < timeout {
        let due = match (&policy, cfg.replan_interval) {
            (None, _) => true,
            (Some(_), Some(r)) => since_plan >= r,
            (Some(_), None) => false,
        };
        if due {
            let start = Instant::now();
            let plan = planner.plan(s, t)?;
            compute += start.elapsed();
            linear += plan.linear_solve_time;
            policy = Some(plan.policy);
            plans += 1;
            since_plan = 0;
        }
        let set = policy.as_ref().expect("planned above").actions(s, t);
        if set.is_empty() {
            return Err(Error::EmptyActions(s));
        }
        let pick = rng.gen_range(0..set.len());
        let action = set.iter().nth(pick).expect("index within set");
        samples.last_mut().expect("non-empty").action = Some(action);

        let g = motion_model_at(pos, action, &problem.field, t, &problem.motion)?;
        let next = grid.clamp(pos + g.sample(&mut rng));
        metrics.path_length += (next - pos).norm();
        pos = next;
        metrics.steps += 1;
        t = cfg.t0 + metrics.steps as f64 * dt;
        s = grid.locate(pos);
        since_plan += 1;
        samples.push(Sample {
            t,
            position: pos,
            state: s,
            action: None,
        });
        if s == grid.goal() {
            outcome = Outcome::ReachedGoal;
        }
    }

    metrics.travel_time = metrics.steps as f64 * dt;
    metrics.compute_time = compute.as_secs_f64();
    // Both clocks are sampled separately; keep the sub-measure inside the total.
    metrics.linear_solve_time = linear.as_secs_f64().min(metrics.compute_time);
    metrics.replan_count = plans.saturating_sub(1);
    metrics.reached_goal = outcome == Outcome::ReachedGoal;
    Ok((Trajectory { samples, outcome }, metrics))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for one run.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Result<Stat> {
        if values.is_empty() {
            return Err(Error::EmptyRuns);
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Ok(Stat {
            mean,
            std,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub runs: usize,
    pub success_rate: f64,
    pub metrics: BTreeMap<String, Stat>,
}

pub const METRIC_NAMES: [&str; 5] = [
    "path_length",
    "travel_time",
    "compute_time",
    "linear_solve_time",
    "replan_count",
];

fn metric(m: &RunMetrics, name: &str) -> f64 {
    match name {
        "path_length" => m.path_length,
        "travel_time" => m.travel_time,
        "compute_time" => m.compute_time,
        "linear_solve_time" => m.linear_solve_time,
        "replan_count" => m.replan_count as f64,
        _ => unreachable!("unknown metric {name}"),
    }
}

/// Mean, sample standard deviation, min and max of every metric.
pub fn aggregate(runs: &[RunMetrics]) -> Result<Summary> {
    if runs.is_empty() {
        return Err(Error::EmptyRuns);
    }
    let mut metrics = BTreeMap::new();
    for name in METRIC_NAMES {
        let values: Vec<f64> = runs.iter().map(|r| metric(r, name)).collect();
        metrics.insert(name.to_string(), Stat::of(&values)?);
    }
    let reached = runs.iter().filter(|r| r.reached_goal).count();
    Ok(Summary {
        runs: runs.len(),
        success_rate: reached as f64 / runs.len() as f64,
        metrics,
    })
}

/// Fraction of forward walks from `origin` that visit each state.
///
/// Each walk samples successors from `pmfs[s]` until it enters an absorbing
/// state or has taken `max_steps` hops.
pub fn visit_likelihood(
    pmfs: &[TransitionPmf],
    origin: StateId,
    absorbing: &[StateId],
    walks: usize,
    max_steps: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let n = pmfs.len();
    if origin >= n {
        return Err(Error::InvalidState(origin));
    }
    if walks == 0 {
        return Err(Error::InvalidParameter("walks must be >= 1".into()));
    }
    let picks = pmfs
        .iter()
        .map(|p| WeightedIndex::new(p.entries.iter().map(|e| e.1)).ok())
        .collect::<Vec<_>>();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0usize; n];
    let mut seen = vec![usize::MAX; n];
    for w in 0..walks {
        let mut s = origin;
        for step in 0..=max_steps {
            if seen[s] != w {
                seen[s] = w;
                counts[s] += 1;
            }
            if step == max_steps || absorbing.contains(&s) {
                break;
            }
            let Some(pick) = &picks[s] else { break };
            s = pmfs[s].entries[pick.sample(&mut rng)].0;
        }
    }
    Ok(counts
        .into_iter()
        .map(|c| c as f64 / walks as f64)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disturbance::make_uniform;
    use crate::gridworld::{ActionSet, GridWorld};
    use crate::solvers::{Plan, PlanSnapshot, Policy, RewardModel};
    use crate::timing::TimingConfig;
    use crate::transition::{MotionConfig, NoiseConfig};

    struct Fixed(Policy);

    impl Planner for Fixed {
        fn plan(&mut self, _: StateId, _: f64) -> Result<Plan> {
            Ok(Plan {
                policy: PlanPolicy::Stationary(self.0.clone()),
                linear_solve_time: Duration::ZERO,
            })
        }

        fn snapshot(&self) -> Result<Option<PlanSnapshot>> {
            Ok(None)
        }
    }

    fn strip(noise: NoiseConfig, speed: f64) -> Problem {
        let grid = GridWorld::new(5, 1, 2.0, Vec2::new(1.0, 1.0), 4).unwrap();
        let motion = MotionConfig::nominal(&grid, speed, noise).unwrap();
        Problem::new(
            grid,
            make_uniform(Vec2::zeros()),
            motion,
            RewardModel::default(),
            TimingConfig::default(),
        )
        .unwrap()
    }

    fn east() -> Fixed {
        Fixed(Policy::new(vec![ActionSet::single(Action::East); 5]))
    }

    #[test]
    fn straight_line_kinematics() {
        let p = strip(NoiseConfig::zero(), 0.5);
        let cfg = RolloutConfig {
            start: 0,
            t0: 0.0,
            seed: 1,
            timeout_steps: None,
            replan_interval: None,
        };
        let (traj, m) = rollout(&mut east(), &p, &cfg).unwrap();
        assert_eq!(traj.outcome, Outcome::ReachedGoal);
        assert_eq!(m.path_length, 8.0);
        assert_eq!(m.travel_time, 8.0 / 0.5);
        assert_eq!(traj.samples.len(), 5);
        assert_eq!(traj.samples.last().unwrap().state, 4);
        assert_eq!(m.replan_count, 0);
    }

    #[test]
    fn seeded_runs_are_identical() {
        let p = strip(NoiseConfig::default_for(2.0).scaled(4.0), 1.0);
        let cfg = RolloutConfig {
            start: 0,
            t0: 0.5,
            seed: 42,
            timeout_steps: Some(100),
            replan_interval: Some(2),
        };
        let (a, ma) = rollout(&mut east(), &p, &cfg).unwrap();
        let (b, mb) = rollout(&mut east(), &p, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ma.path_length.to_bits(), mb.path_length.to_bits());
        for w in a.samples.windows(2) {
            assert!(w[1].t > w[0].t);
        }
        let (lo, hi) = p.grid.bounds();
        for s in &a.samples {
            assert!(s.position.x >= lo.x && s.position.x <= hi.x);
            assert!(s.position.y >= lo.y && s.position.y <= hi.y);
        }
        assert_eq!(ma.travel_time, ma.steps as f64 * p.motion.duration);
    }

    #[test]
    fn timeout_is_an_outcome() {
        let p = strip(NoiseConfig::zero(), 1.0);
        let mut idle = Fixed(Policy::new(vec![ActionSet::single(Action::Idle); 5]));
        let cfg = RolloutConfig {
            start: 0,
            t0: 0.0,
            seed: 3,
            timeout_steps: Some(7),
            replan_interval: Some(1),
        };
        let (traj, m) = rollout(&mut idle, &p, &cfg).unwrap();
        assert_eq!(traj.outcome, Outcome::Timeout);
        assert_eq!(m.steps, 7);
        assert_eq!(m.replan_count, 6);
        assert!(!m.reached_goal);
    }

    #[test]
    fn aggregate_statistics() {
        let run = |l: f64| RunMetrics {
            path_length: l,
            ..Default::default()
        };
        let one = aggregate(&[run(10.0)]).unwrap();
        assert_eq!(one.metrics["path_length"].mean, 10.0);
        assert_eq!(one.metrics["path_length"].std, 0.0);
        let two = aggregate(&[run(10.0), run(20.0)]).unwrap();
        assert_eq!(two.metrics["path_length"].mean, 15.0);
        assert!((two.metrics["path_length"].std - 50f64.sqrt()).abs() < 1e-12);
        assert_eq!(two.metrics["path_length"].min, 10.0);
        assert!(matches!(aggregate(&[]), Err(Error::EmptyRuns)));
    }

    #[test]
    fn csv_export() {
        let p = strip(NoiseConfig::zero(), 1.0);
        let cfg = RolloutConfig {
            start: 2,
            t0: 0.0,
            seed: 0,
            timeout_steps: None,
            replan_interval: None,
        };
        let (traj, _) = rollout(&mut east(), &p, &cfg).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,x,y,state,action");
        assert_eq!(lines[1], "0,5,1,2,2");
        assert_eq!(lines.last().unwrap(), &"4,9,1,4,");
    }

    #[test]
    fn visit_likelihood_of_a_certain_path() {
        let step = |s: StateId, t: StateId| TransitionPmf {
            source: s,
            time: 0.0,
            entries: vec![(s, 0.0), (t, 1.0)],
        };
        let pmfs = vec![step(0, 1), step(1, 2), step(2, 2), step(3, 2)];
        let v = visit_likelihood(&pmfs, 0, &[2], 10, 100, 1).unwrap();
        assert_eq!(v, vec![1.0, 1.0, 1.0, 0.0]);
        assert!(visit_likelihood(&pmfs, 9, &[2], 10, 100, 1).is_err());
    }
}
