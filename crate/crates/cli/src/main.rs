use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tvmdp_cli::{
    emit_policy_maps, run_experiment, CliError, LoadedConfig, RunOptions, OUT_DIR_ENV,
};

/// Plan robot motion on a grid under time-varying disturbances and compare
/// planners over seeded rollouts.
#[derive(Parser)]
#[command(name = "tvmdp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (solver, seed) cell of an experiment config.
    Run {
        config: PathBuf,
        /// Output directory [default: config `output_dir`, else runs/<name>].
        #[arg(long, env = OUT_DIR_ENV)]
        out: Option<PathBuf>,
        /// Worker threads [default: one per core].
        #[arg(long)]
        jobs: Option<usize>,
        /// Added to every seed in the config.
        #[arg(long, default_value_t = 0)]
        seed_offset: u64,
    },
    /// Check a config without running it.
    Validate { config: PathBuf },
    /// Write policy-map CSVs for the solved instances of a run directory.
    EmitPolicyMap {
        run_dir: PathBuf,
        /// Forward walks per map for the visit likelihood.
        #[arg(long, default_value_t = 1000)]
        walks: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            config,
            out,
            jobs,
            seed_offset,
        } => {
            if jobs == Some(0) {
                return Err(CliError::Config("--jobs must be >= 1".into()));
            }
            let loaded = LoadedConfig::load(&config)?;
            let report = run_experiment(
                &loaded,
                &RunOptions {
                    out,
                    jobs,
                    seed_offset,
                },
            )?;
            for f in &report.failures {
                eprintln!("error: {f}");
            }
            if !report.failures.is_empty() {
                return Err(CliError::Failed {
                    count: report.failures.len(),
                    total: report.runs,
                });
            }
            println!(
                "{} runs written to {}",
                report.runs,
                report.out_dir.display()
            );
            Ok(())
        }
        Command::Validate { config } => {
            let loaded = LoadedConfig::load(&config)?;
            let p = loaded.problem()?;
            let c = &loaded.config;
            println!(
                "{}: ok ({}x{} grid, {} solvers x {} seeds)",
                config.display(),
                p.grid.width(),
                p.grid.height(),
                c.solvers.len(),
                c.seeds.len()
            );
            Ok(())
        }
        Command::EmitPolicyMap {
            run_dir,
            walks,
            seed,
        } => {
            if walks == 0 {
                return Err(CliError::Config("--walks must be >= 1".into()));
            }
            for path in emit_policy_maps(&run_dir, walks, seed)? {
                println!("{}", path.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
