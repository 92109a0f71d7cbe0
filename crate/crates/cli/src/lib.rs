//! Runs solver x seed experiment matrices and writes their artifacts.

pub mod config;
pub mod policy_map;
pub mod run;

pub use config::{ExperimentConfig, LoadedConfig};
pub use policy_map::emit_policy_maps;
pub use run::{run_experiment, RunOptions, RunReport};

/// Environment variable that overrides the config's output directory.
pub const OUT_DIR_ENV: &str = "TVMDP_OUT_DIR";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Invalid or unreadable config.
    #[error("config error: {0}")]
    Config(String),

    #[error("{solver} seed {seed}: {source}")]
    Cell {
        solver: String,
        seed: u64,
        #[source]
        source: tvmdp::Error,
    },

    #[error("{solver} solve from the start state: {source}")]
    Solve {
        solver: String,
        #[source]
        source: tvmdp::Error,
    },

    #[error("{count} of {total} runs failed")]
    Failed { count: usize, total: usize },

    #[error("{0}")]
    Input(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// Process exit code: 2 for config errors, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
