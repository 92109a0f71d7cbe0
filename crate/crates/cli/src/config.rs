//! Experiment config files.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tvmdp::{
    FieldSpec, GridWorld, MotionConfig, NoiseConfig, Problem, RewardModel, SolverConfig, StateId,
    TimingConfig, Vec2,
};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    #[serde(default = "one")]
    pub cell_size: f64,
    /// `[column, row]` of the start cell.
    pub start: [usize; 2],
    /// `[column, row]` of the goal cell.
    pub goal: [usize; 2],
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub blocked: Vec<[usize; 2]>,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionSpec {
    #[serde(default = "one")]
    pub speed: f64,
    /// Seconds per motion step; defaults to one cell at full speed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    /// Defaults to `(0.1 cell)^2 I` for the action and `(0.2 cell)^2 I` for
    /// the disturbance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseConfig>,
}

impl Default for MotionSpec {
    fn default() -> Self {
        MotionSpec {
            speed: 1.0,
            duration: None,
            noise: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub grid: GridSpec,
    pub field: FieldSpec,
    #[serde(default)]
    pub motion: MotionSpec,
    #[serde(default)]
    pub reward: RewardModel,
    #[serde(default)]
    pub timing: TimingConfig,
    pub solvers: Vec<SolverConfig>,
    pub seeds: Vec<u64>,
    /// Start time (s).
    #[serde(default)]
    pub t0: f64,
    /// Step limit per run; defaults to `50 * |S|`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_steps: Option<usize>,
    /// Relative paths resolve against the working directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// A config together with the directory its relative paths resolve against.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    /// Parses and validates a config document. Errors name the offending key
    /// path, e.g. `solvers[1].layrs: unknown field`.
    pub fn from_json_str(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: ExperimentConfig = serde_path_to_error::deserialize(de)
            .map_err(|e| CliError::Config(format!("{}: {}", e.path(), e.inner())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.name.is_empty() {
            return bad("name must not be empty".into());
        }
        if self.solvers.is_empty() {
            return bad("solvers must list at least one solver".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds must list at least one seed".into());
        }
        let mut labels = HashSet::new();
        for (i, s) in self.solvers.iter().enumerate() {
            s.validate()
                .map_err(|e| CliError::Config(format!("solvers[{i}]: {e}")))?;
            let label = s.label();
            if label.is_empty()
                || !label
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
            {
                return bad(format!(
                    "solvers[{i}]: name {label:?} must be non-empty and use only [A-Za-z0-9_-]"
                ));
            }
            if !labels.insert(label.clone()) {
                return bad(format!(
                    "solvers[{i}]: duplicate solver name {label:?}; set distinct `name`s"
                ));
            }
        }
        let mut seeds = HashSet::new();
        for s in &self.seeds {
            if !seeds.insert(s) {
                return bad(format!("seeds: duplicate seed {s}"));
            }
        }
        if !self.t0.is_finite() {
            return bad(format!("t0 must be finite, got {}", self.t0));
        }
        if self.timeout_steps == Some(0) {
            return bad("timeout_steps must be >= 1".into());
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<GridWorld, CliError> {
        let g = &self.grid;
        let id = |cell: [usize; 2], what: &str| -> Result<StateId, CliError> {
            if cell[0] >= g.width || cell[1] >= g.height {
                return Err(CliError::Config(format!(
                    "grid.{what}: cell {cell:?} is outside the {}x{} grid",
                    g.width, g.height
                )));
            }
            Ok(cell[1] * g.width + cell[0])
        };
        let goal = id(g.goal, "goal")?;
        let blocked = g
            .blocked
            .iter()
            .map(|&c| id(c, "blocked"))
            .collect::<Result<Vec<_>, _>>()?;
        let origin = Vec2::repeat(g.cell_size / 2.0);
        let grid = GridWorld::with_blocked(g.width, g.height, g.cell_size, origin, goal, &blocked)
            .map_err(|e| CliError::Config(format!("grid: {e}")))?;
        let start = id(g.start, "start")?;
        if grid.is_blocked(start) {
            return Err(CliError::Config(format!(
                "grid.start: cell {:?} is blocked",
                g.start
            )));
        }
        Ok(grid)
    }

    pub fn start(&self) -> StateId {
        self.grid.start[1] * self.grid.width + self.grid.start[0]
    }

    pub fn problem(&self, base_dir: &Path) -> Result<Problem, CliError> {
        let grid = self.grid()?;
        let field = self
            .field
            .build(base_dir)
            .map_err(|e| CliError::Config(format!("field: {e}")))?;
        let m = &self.motion;
        let noise = m
            .noise
            .unwrap_or_else(|| NoiseConfig::default_for(grid.cell_size()));
        let duration = m.duration.unwrap_or(grid.cell_size() / m.speed);
        let motion = MotionConfig::new(m.speed, duration, noise)
            .map_err(|e| CliError::Config(format!("motion: {e}")))?;
        Problem::new(grid, field, motion, self.reward, self.timing)
            .map_err(|e| CliError::Config(e.to_string()))
    }
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config = ExperimentConfig::from_json_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(LoadedConfig { config, base_dir })
    }

    /// Builds everything a run needs, surfacing every config error up front.
    pub fn problem(&self) -> Result<Problem, CliError> {
        self.config.problem(&self.base_dir)
    }
}
