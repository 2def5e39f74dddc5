//! `diffplan` — solve, simulate, train, and inspect joint lane-decision and
//! trajectory plans. Set `DIFFPLAN_LOG` to control log verbosity.

mod commands;
mod manifest;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Exit codes: 0 success, 1 input/config error, 2 degraded result
/// (e.g. non-convergence), 3 internal fault.
pub enum Outcome {
    Success,
    Degraded,
}

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Internal(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

pub type CliResult = Result<Outcome, CliError>;

#[derive(Parser)]
#[command(
    name = "diffplan",
    version,
    about = "Joint lane-decision and trajectory planning with a differentiable Gauss-Newton solver"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct SolverFlags {
    /// Solver preset.
    #[arg(long, value_parser = ["training", "inference"], default_value = "inference")]
    solver_mode: String,
    /// Override the update step size.
    #[arg(long)]
    beta: Option<f64>,
    /// Override the iteration budget.
    #[arg(long)]
    iters: Option<usize>,
}

impl SolverFlags {
    pub fn resolve(&self) -> diffplan_core::solver::SolverConfig {
        use diffplan_core::solver::{SolverConfig, SolverMode};
        let mode = if self.solver_mode == "training" {
            SolverMode::Training
        } else {
            SolverMode::Inference
        };
        let mut config = SolverConfig::for_mode(mode);
        if let Some(beta) = self.beta {
            config.step_size = beta;
        }
        if let Some(iters) = self.iters {
            config.max_iters = iters;
        }
        config
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scenario and write a solve-v1 document.
    Solve {
        /// Scenario file (scenario-v1 JSON).
        #[arg(long)]
        scenario: PathBuf,
        /// Cost weights file (weights-v1 JSON); defaults otherwise.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverFlags,
        /// Initializer name: constant-velocity, heuristic, toy:<file>.
        #[arg(long, visible_alias = "planner", default_value = "heuristic")]
        initializer: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output path for the solve-v1 document.
        #[arg(long, default_value = "solve.json")]
        out: PathBuf,
    },
    /// Closed-loop log-replay simulation over a suite directory.
    Simulate {
        /// Directory of scenario-v1 files.
        #[arg(long)]
        suite: PathBuf,
        /// Episode length in steps.
        #[arg(long, default_value_t = 150)]
        steps: usize,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverFlags,
        #[arg(long, visible_alias = "planner", default_value = "heuristic")]
        initializer: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Parallelism across scenarios.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Output directory for episode logs and metrics.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the learnable cost weights and the toy initializer.
    Train {
        #[arg(long)]
        suite: PathBuf,
        /// Training configuration file (train-config-v1 JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Initial cost weights (weights-v1 JSON).
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Resume from a train-v1 checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate the synthetic scenario suite.
    GenSuite {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        count: usize,
    },
    /// Export plot-ready CSV (time, accel, steer, speed, maneuver) from an
    /// episode log.
    PlotData {
        /// episode-v1 JSON-lines file.
        #[arg(long)]
        log: PathBuf,
        /// Output CSV path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-execute a recorded run from its manifest.
    Rerun {
        #[arg(long)]
        manifest: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("DIFFPLAN_LOG")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve {
            scenario,
            weights,
            solver,
            initializer,
            seed,
            out,
        } => commands::solve(commands::SolveRun {
            scenario,
            weights,
            solver: solver.resolve(),
            initializer,
            seed,
            out,
        }),
        Command::Simulate {
            suite,
            steps,
            weights,
            solver,
            initializer,
            seed,
            jobs,
            out,
        } => commands::simulate(commands::SimulateRun {
            suite,
            steps,
            weights,
            solver: solver.resolve(),
            initializer,
            seed,
            jobs,
            out,
        }),
        Command::Train {
            suite,
            config,
            weights,
            resume,
            seed,
            out,
        } => commands::train(commands::TrainRun {
            suite,
            config,
            weights,
            resume,
            seed,
            out,
        }),
        Command::GenSuite { out, seed, count } => {
            commands::gen_suite(commands::GenSuiteRun { out, seed, count })
        }
        Command::PlotData { log, out } => commands::plot_data(commands::PlotRun { log, out }),
        Command::Rerun { manifest } => commands::rerun(&manifest),
    };
    match result {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Degraded) => {
            eprintln!("diffplan: completed with degraded result (non-convergence)");
            ExitCode::from(2)
        }
        Err(CliError::Input(msg)) => {
            eprintln!("diffplan: input error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Internal(msg)) => {
            eprintln!("diffplan: internal error: {msg}");
            ExitCode::from(3)
        }
    }
}
