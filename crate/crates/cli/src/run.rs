//! The `run` command: every (solver, seed) cell of an experiment.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{mpsc, Arc};

use serde::{Deserialize, Serialize};
use tvmdp::disturbance::FieldModelSpec;
use tvmdp::sim::Outcome;
use tvmdp::{
    aggregate, rollout, PlanSnapshot, Planner, Problem, RolloutConfig, RunMetrics, SolverConfig,
    SolverKind, SolverPlanner, StateId, Summary, Trajectory,
};

use crate::{CliError, LoadedConfig};

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Output directory; overrides the config's `output_dir`.
    pub out: Option<PathBuf>,
    /// Worker threads; `None` uses one per core.
    pub jobs: Option<usize>,
    /// Added to every seed in the config.
    pub seed_offset: u64,
}

#[derive(Debug)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub runs: usize,
    /// Cells that failed, in solver then seed order.
    pub failures: Vec<CliError>,
}

#[derive(Serialize)]
struct WallClock {
    compute_time: f64,
    linear_solve_time: f64,
}

/// Per-run metrics file. Wall-clock measurements are grouped so that the
/// rest of the document is reproducible byte for byte.
#[derive(Serialize)]
struct MetricsFile<'a> {
    solver: &'a str,
    kind: SolverKind,
    seed: u64,
    outcome: Outcome,
    reached_goal: bool,
    path_length: f64,
    travel_time: f64,
    steps: usize,
    replan_count: usize,
    wall_clock: WallClock,
}

#[derive(Serialize)]
struct SolverSummary<'a> {
    solver: &'a str,
    kind: SolverKind,
    replan_interval: Option<usize>,
    #[serde(flatten)]
    summary: Summary,
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    name: &'a str,
    seeds: Vec<u64>,
    solvers: Vec<SolverSummary<'a>>,
}

#[derive(Serialize)]
struct ComparisonRow<'a> {
    solver: &'a str,
    kind: SolverKind,
    runs: usize,
    success_rate: f64,
    path_length_mean: f64,
    path_length_std: f64,
    travel_time_mean: f64,
    travel_time_std: f64,
    compute_time_mean: f64,
    linear_solve_time_mean: f64,
    replan_count_mean: f64,
}

/// A solved instance from the start state, as written to
/// `solutions/solution_<solver>.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionFile {
    pub solver: String,
    pub kind: SolverKind,
    pub origin: StateId,
    pub t0: f64,
    /// Optimal action ids per cell (empty for blocked cells).
    pub actions: Vec<Vec<u8>>,
    /// Expected arrival time from `origin` per cell.
    pub multi_hop: Vec<f64>,
    /// Policy transition PMF per cell as `(state, probability)` pairs.
    pub pmfs: Vec<Vec<(StateId, f64)>>,
}

impl SolutionFile {
    fn new(solver: &SolverConfig, snap: PlanSnapshot) -> Self {
        SolutionFile {
            solver: solver.label(),
            kind: solver.kind,
            origin: snap.origin,
            t0: snap.t0,
            actions: snap.policy.sets().iter().map(|s| s.ids()).collect(),
            multi_hop: snap.multi_hop,
            pmfs: snap.pmfs.into_iter().map(|p| p.entries).collect(),
        }
    }
}

enum Message {
    Run {
        solver: usize,
        seed: u64,
        result: tvmdp::Result<(Trajectory, RunMetrics)>,
    },
    Solution {
        solver: usize,
        result: tvmdp::Result<Option<PlanSnapshot>>,
    },
}

pub fn run_file_stem(solver: &str, seed: u64) -> String {
    format!("{solver}_seed{seed}")
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::io(path, e.into()))?;
    writeln!(w)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(path, e))
}

fn run_cell(
    problem: &Arc<Problem>,
    solver: &SolverConfig,
    cfg: &RolloutConfig,
) -> tvmdp::Result<(Trajectory, RunMetrics)> {
    let mut planner = SolverPlanner::new(problem.clone(), solver.clone())?;
    rollout(&mut planner, problem, cfg)
}

fn solve_once(
    problem: &Arc<Problem>,
    solver: &SolverConfig,
    start: StateId,
    t0: f64,
) -> tvmdp::Result<Option<PlanSnapshot>> {
    let mut planner = SolverPlanner::new(problem.clone(), solver.clone())?;
    planner.plan(start, t0)?;
    planner.snapshot()
}

/// Copy of the config for the output directory, with a relative field file
/// path made absolute so the copy stays usable.
fn archived_config(loaded: &LoadedConfig) -> crate::ExperimentConfig {
    let mut c = loaded.config.clone();
    if let FieldModelSpec::File { path } = &mut c.field.model {
        let p = Path::new(path.as_str());
        if p.is_relative() {
            let joined = loaded.base_dir.join(p);
            *path = fs::canonicalize(&joined)
                .unwrap_or(joined)
                .display()
                .to_string();
        }
    }
    c
}

/// Runs every (solver, seed) cell, writing as results arrive:
///
/// - `trajectories/<solver>_seed<k>.csv` and `metrics/<solver>_seed<k>.json` per run;
/// - `solutions/solution_<solver>.json`: the plan from the start state at `t0`;
/// - `summary.json` and `comparison.csv` once every cell has completed;
/// - `config.json`: the parsed config.
///
/// A failing cell does not stop the others; it is reported in
/// [`RunReport::failures`] and suppresses the summary files.
pub fn run_experiment(loaded: &LoadedConfig, opts: &RunOptions) -> Result<RunReport, CliError> {
    let config = &loaded.config;
    let problem = Arc::new(loaded.problem()?);
    let out_dir = opts
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| Path::new("runs").join(&config.name));
    for sub in ["", "trajectories", "metrics", "solutions"] {
        let d = out_dir.join(sub);
        fs::create_dir_all(&d).map_err(|e| CliError::io(&d, e))?;
    }
    write_json(&out_dir.join("config.json"), &archived_config(loaded))?;

    let seeds: Vec<u64> = config
        .seeds
        .iter()
        .map(|s| {
            s.checked_add(opts.seed_offset).ok_or_else(|| {
                CliError::Config(format!("seed {s} + offset {} overflows", opts.seed_offset))
            })
        })
        .collect::<Result<_, _>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Input(format!("cannot start worker pool: {e}")))?;
    let start = config.start();
    let t0 = config.t0;
    let solvers = &config.solvers;

    let (tx, rx) = mpsc::channel::<Message>();
    let collected = std::thread::scope(|scope| {
        let collector = scope.spawn(|| collect(rx, &out_dir, solvers));
        pool.scope(|pool_scope| {
            for (i, solver) in solvers.iter().enumerate() {
                let (solve_tx, solve_problem) = (tx.clone(), problem.clone());
                pool_scope.spawn(move |_| {
                    let result = solve_once(&solve_problem, solver, start, t0);
                    let _ = solve_tx.send(Message::Solution { solver: i, result });
                });
                for &seed in &seeds {
                    let tx = tx.clone();
                    let problem = problem.clone();
                    pool_scope.spawn(move |_| {
                        let cfg = RolloutConfig {
                            start,
                            t0,
                            seed,
                            timeout_steps: config.timeout_steps,
                            replan_interval: solver.effective_replan_interval(),
                        };
                        let result = run_cell(&problem, solver, &cfg);
                        let _ = tx.send(Message::Run {
                            solver: i,
                            seed,
                            result,
                        });
                    });
                }
            }
        });
        drop(tx);
        collector.join().expect("collector thread panicked")
    })?;

    let Collected {
        mut runs,
        mut failures,
    } = collected;
    failures.sort_by_key(|(solver, seed, _)| (*solver, *seed));
    let failures: Vec<CliError> = failures.into_iter().map(|(_, _, e)| e).collect();
    let total = runs.len()
        + failures
            .iter()
            .filter(|e| matches!(e, CliError::Cell { .. }))
            .count();
    if failures.is_empty() {
        runs.sort_by_key(|(solver, seed, _)| (*solver, *seed));
        write_summaries(&out_dir, config, &seeds, &runs)?;
    }
    Ok(RunReport {
        out_dir,
        runs: total,
        failures,
    })
}

struct Collected {
    runs: Vec<(usize, u64, RunMetrics)>,
    /// `(solver, seed, error)`; solution failures use `u64::MAX` as seed so
    /// they sort last.
    failures: Vec<(usize, u64, CliError)>,
}

/// Single writer for every per-cell file.
fn collect(
    rx: mpsc::Receiver<Message>,
    out_dir: &Path,
    solvers: &[SolverConfig],
) -> Result<Collected, CliError> {
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for msg in rx {
        match msg {
            Message::Run {
                solver,
                seed,
                result,
            } => {
                let s = &solvers[solver];
                let label = s.label();
                match result {
                    Ok((traj, m)) => {
                        let stem = run_file_stem(&label, seed);
                        let path = out_dir.join("trajectories").join(format!("{stem}.csv"));
                        let mut w = create(&path)?;
                        traj.write_csv(&mut w)
                            .and_then(|_| w.flush())
                            .map_err(|e| CliError::io(&path, e))?;
                        let file = MetricsFile {
                            solver: &label,
                            kind: s.kind,
                            seed,
                            outcome: traj.outcome,
                            reached_goal: m.reached_goal,
                            path_length: m.path_length,
                            travel_time: m.travel_time,
                            steps: m.steps,
                            replan_count: m.replan_count,
                            wall_clock: WallClock {
                                compute_time: m.compute_time,
                                linear_solve_time: m.linear_solve_time,
                            },
                        };
                        write_json(&out_dir.join("metrics").join(format!("{stem}.json")), &file)?;
                        log::info!(
                            "{label} seed {seed}: length {:.3} m, time {:.1} s",
                            m.path_length,
                            m.travel_time
                        );
                        runs.push((solver, seed, m));
                    }
                    Err(source) => {
                        log::error!("{label} seed {seed} failed: {source}");
                        failures.push((
                            solver,
                            seed,
                            CliError::Cell {
                                solver: label,
                                seed,
                                source,
                            },
                        ));
                    }
                }
            }
            Message::Solution { solver, result } => {
                let s = &solvers[solver];
                let label = s.label();
                match result {
                    Ok(Some(snap)) => {
                        let path = out_dir
                            .join("solutions")
                            .join(format!("solution_{label}.json"));
                        write_json(&path, &SolutionFile::new(s, snap))?;
                    }
                    Ok(None) => unreachable!("snapshot requested after planning"),
                    Err(source) => {
                        log::error!("{label} solve from the start state failed: {source}");
                        failures.push((
                            solver,
                            u64::MAX,
                            CliError::Solve {
                                solver: label,
                                source,
                            },
                        ));
                    }
                }
            }
        }
    }
    Ok(Collected { runs, failures })
}

fn write_summaries(
    out_dir: &Path,
    config: &crate::ExperimentConfig,
    seeds: &[u64],
    runs: &[(usize, u64, RunMetrics)],
) -> Result<(), CliError> {
    let mut summaries = Vec::new();
    for (i, s) in config.solvers.iter().enumerate() {
        let metrics: Vec<RunMetrics> = runs.iter().filter(|r| r.0 == i).map(|r| r.2).collect();
        let summary = aggregate(&metrics).map_err(|e| CliError::Input(e.to_string()))?;
        summaries.push((s, summary));
    }

    let path = out_dir.join("comparison.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    let labels: Vec<String> = config.solvers.iter().map(SolverConfig::label).collect();
    for ((s, summary), label) in summaries.iter().zip(&labels) {
        let stat = |name: &str| summary.metrics[name];
        w.serialize(ComparisonRow {
            solver: label,
            kind: s.kind,
            runs: summary.runs,
            success_rate: summary.success_rate,
            path_length_mean: stat("path_length").mean,
            path_length_std: stat("path_length").std,
            travel_time_mean: stat("travel_time").mean,
            travel_time_std: stat("travel_time").std,
            compute_time_mean: stat("compute_time").mean,
            linear_solve_time_mean: stat("linear_solve_time").mean,
            replan_count_mean: stat("replan_count").mean,
        })
        .map_err(|e| CliError::io(&path, e.into()))?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;

    let file = SummaryFile {
        name: &config.name,
        seeds: seeds.to_vec(),
        solvers: summaries
            .into_iter()
            .zip(&labels)
            .map(|((s, summary), label)| SolverSummary {
                solver: label,
                kind: s.kind,
                replan_interval: s.effective_replan_interval(),
                summary,
            })
            .collect(),
    };
    write_json(&out_dir.join("summary.json"), &file)
}
