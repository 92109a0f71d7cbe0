//! The `emit-policy-map` command.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tvmdp::{visit_likelihood, GridWorld, TransitionPmf};

use crate::run::SolutionFile;
use crate::{CliError, ExperimentConfig};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolicyMapRow {
    pub state: usize,
    pub x: f64,
    pub y: f64,
    /// Optimal action ids joined by `;`.
    pub action_ids: String,
    pub multi_hop_time: f64,
    /// Fraction of forward walks from the origin that visit the state.
    pub visit_likelihood: f64,
}

/// One row per unblocked state. Visit likelihoods come from `walks` walks
/// on the solution's policy PMFs, each stopping at the goal or after
/// `50 * |S|` hops.
pub fn policy_map_rows(
    grid: &GridWorld,
    solution: &SolutionFile,
    walks: usize,
    seed: u64,
) -> Result<Vec<PolicyMapRow>, CliError> {
    let n = grid.num_cells();
    if solution.actions.len() != n || solution.multi_hop.len() != n || solution.pmfs.len() != n {
        return Err(CliError::Input(format!(
            "solution for {} does not match the {}x{} grid",
            solution.solver,
            grid.width(),
            grid.height()
        )));
    }
    let pmfs: Vec<TransitionPmf> = solution
        .pmfs
        .iter()
        .enumerate()
        .map(|(s, entries)| TransitionPmf {
            source: s,
            time: solution.t0,
            entries: entries.clone(),
        })
        .collect();
    let visits = visit_likelihood(
        &pmfs,
        solution.origin,
        &[grid.goal()],
        walks,
        50 * grid.num_states(),
        seed,
    )
    .map_err(|e| CliError::Input(format!("{}: {e}", solution.solver)))?;
    grid.states()
        .map(|s| {
            let x = grid
                .state_center(s)
                .map_err(|e| CliError::Input(e.to_string()))?;
            let ids: Vec<String> = solution.actions[s].iter().map(u8::to_string).collect();
            Ok(PolicyMapRow {
                state: s,
                x: x.x,
                y: x.y,
                action_ids: ids.join(";"),
                multi_hop_time: solution.multi_hop[s],
                visit_likelihood: visits[s],
            })
        })
        .collect()
}

/// Writes `policy_maps/policy_map_<solver>.csv` for every solution in a run
/// directory and returns the written paths.
pub fn emit_policy_maps(run_dir: &Path, walks: usize, seed: u64) -> Result<Vec<PathBuf>, CliError> {
    let config_path = run_dir.join("config.json");
    let text = fs::read_to_string(&config_path).map_err(|e| CliError::io(&config_path, e))?;
    let config = ExperimentConfig::from_json_str(&text)?;
    let grid = config.grid()?;

    let sol_dir = run_dir.join("solutions");
    let mut files: Vec<PathBuf> = match fs::read_dir(&sol_dir) {
        Ok(entries) => entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect(),
        Err(_) => Vec::new(),
    };
    if files.is_empty() {
        return Err(CliError::Input(format!(
            "{} holds no solved instances",
            run_dir.display()
        )));
    }
    files.sort();

    let out_dir = run_dir.join("policy_maps");
    fs::create_dir_all(&out_dir).map_err(|e| CliError::io(&out_dir, e))?;
    let mut written = Vec::new();
    for file in files {
        let text = fs::read_to_string(&file).map_err(|e| CliError::io(&file, e))?;
        let solution: SolutionFile = serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("{}: {e}", file.display())))?;
        let rows = policy_map_rows(&grid, &solution, walks, seed)?;
        let path = out_dir.join(format!("policy_map_{}.csv", solution.solver));
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::io(&path, e.into()))?;
        for row in &rows {
            w.serialize(row)
                .map_err(|e| CliError::io(&path, e.into()))?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
