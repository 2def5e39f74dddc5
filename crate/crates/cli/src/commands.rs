//! Command implementations. Each run is described by a serializable config
//! that lands in the manifest, so `rerun` reproduces outputs byte for byte.

use crate::manifest::{manifest_for_file, RunManifest};
use crate::{CliError, CliResult, Outcome};
use diffplan_core::evaluation::{
    aggregate_metrics, closed_loop_run, episode_from_jsonl, episode_to_jsonl, metrics_csv_row,
    metrics_to_json, EpisodeLog, METRICS_CSV_HEADER,
};
use diffplan_core::initializer::initializer_by_name;
use diffplan_core::planner::plan;
use diffplan_core::residuals::{load_weights, CostWeights};
use diffplan_core::solver::{solve_result_to_json, SolverConfig};
use diffplan_core::suite::generate_suite;
use diffplan_core::training::{
    load_checkpoint, pretrain_step, save_checkpoint, train_step, LossWeights, TrainState,
    TrainingConfig,
};
use diffplan_core::world::{load_scenario, save_scenario_string, Scenario};
use log::info;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

fn input<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Input(e.to_string())
}

fn internal<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Internal(e.to_string())
}

fn load_weights_or_default(path: &Option<PathBuf>) -> Result<CostWeights, CliError> {
    match path {
        Some(p) => load_weights(p).map_err(input),
        None => Ok(CostWeights::default()),
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(internal)?;
        }
    }
    std::fs::write(path, text).map_err(internal)
}

/// Scenario files of a suite directory, sorted by file name for determinism.
fn load_suite(dir: &Path) -> Result<Vec<Scenario>, CliError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(input)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|e| e == "json")
                && !p
                    .file_name()
                    .is_some_and(|n| n.to_string_lossy().contains("manifest"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Input(format!(
            "no scenario files in {}",
            dir.display()
        )));
    }
    paths
        .iter()
        .map(|p| load_scenario(p).map_err(|e| input(format!("{}: {e}", p.display()))))
        .collect()
}

// -------------------------------------------------------------------------
// solve
// -------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
pub struct SolveRun {
    pub scenario: PathBuf,
    pub weights: Option<PathBuf>,
    pub solver: SolverConfig,
    pub initializer: String,
    pub seed: u64,
    pub out: PathBuf,
}

pub fn solve(run: SolveRun) -> CliResult {
    let scenario = load_scenario(&run.scenario).map_err(input)?;
    let weights = load_weights_or_default(&run.weights)?;
    let init = initializer_by_name(&run.initializer).map_err(input)?;

    let manifest = RunManifest::new(
        "solve",
        run.seed,
        vec![run.scenario.clone()],
        vec![run.out.clone()],
        &run,
    )
    .map_err(internal)?;
    manifest.write(&manifest_for_file(&run.out)).map_err(internal)?;

    let outcome = plan(
        &scenario,
        &scenario.ego.start,
        scenario.current_step(),
        init.as_ref(),
        &weights,
        &run.solver,
    )
    .map_err(internal)?;
    write_text(&run.out, &solve_result_to_json(&outcome.result))?;
    info!(
        "solved {}: maneuver {} cost {:.3} converged {}",
        scenario.name,
        outcome.result.maneuver,
        outcome.result.final_cost(),
        outcome.result.converged
    );
    if outcome.result.converged {
        Ok(Outcome::Success)
    } else {
        Ok(Outcome::Degraded)
    }
}

// -------------------------------------------------------------------------
// simulate
// -------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
pub struct SimulateRun {
    pub suite: PathBuf,
    pub steps: usize,
    pub weights: Option<PathBuf>,
    pub solver: SolverConfig,
    pub initializer: String,
    pub seed: u64,
    pub jobs: usize,
    pub out: PathBuf,
}

pub fn simulate(run: SimulateRun) -> CliResult {
    let scenarios = load_suite(&run.suite)?;
    let weights = load_weights_or_default(&run.weights)?;
    // resolve once to validate the name; workers construct their own
    initializer_by_name(&run.initializer).map_err(input)?;

    let manifest = RunManifest::new(
        "simulate",
        run.seed,
        vec![run.suite.clone()],
        vec![run.out.clone()],
        &run,
    )
    .map_err(internal)?;
    std::fs::create_dir_all(&run.out).map_err(internal)?;
    manifest.write(&run.out.join("manifest.json")).map_err(internal)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(run.jobs.max(1))
        .build()
        .map_err(internal)?;
    let logs: Vec<EpisodeLog> = pool.install(|| {
        use rayon::prelude::*;
        scenarios
            .par_iter()
            .map(|scenario| {
                let init = initializer_by_name(&run.initializer).expect("validated name");
                closed_loop_run(
                    scenario,
                    init.as_ref(),
                    &weights,
                    &run.solver,
                    run.steps,
                    run.seed,
                )
            })
            .collect()
    });

    for log in &logs {
        let path = run.out.join(format!("{}.episode.jsonl", log.scenario));
        write_text(&path, &episode_to_jsonl(log))?;
        info!(
            "episode {}: {:?} after {} steps",
            log.scenario,
            log.termination,
            log.steps.len()
        );
    }
    let scenario_refs: Vec<&Scenario> = scenarios.iter().collect();
    let metrics = aggregate_metrics(&logs, &scenario_refs).map_err(internal)?;
    write_text(&run.out.join("metrics.json"), &metrics_to_json(&metrics))?;
    let mut csv = String::from(METRICS_CSV_HEADER);
    csv.push('\n');
    csv.push_str(&metrics_csv_row(
        &run.suite.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "suite".into()),
        &metrics,
    ));
    csv.push('\n');
    write_text(&run.out.join("metrics.csv"), &csv)?;
    Ok(Outcome::Success)
}

// -------------------------------------------------------------------------
// train
// -------------------------------------------------------------------------

#[derive(Serialize, Deserialize, Clone)]
pub struct TrainFileConfig {
    #[serde(default)]
    pub training: Option<TrainingConfig>,
    #[serde(default)]
    pub loss_weights: Option<LossWeights>,
}

#[derive(Serialize, Deserialize)]
pub struct TrainRun {
    pub suite: PathBuf,
    pub config: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub resume: Option<PathBuf>,
    pub seed: u64,
    pub out: PathBuf,
}

pub fn train(run: TrainRun) -> CliResult {
    let scenarios = load_suite(&run.suite)?;
    let file_cfg: TrainFileConfig = match &run.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(input)?;
            serde_json::from_str(&text).map_err(input)?
        }
        None => TrainFileConfig {
            training: None,
            loss_weights: None,
        },
    };
    let config = file_cfg.training.unwrap_or_default();
    let loss_weights = file_cfg.loss_weights.unwrap_or_default();

    let mut state = match &run.resume {
        Some(path) => load_checkpoint(path).map_err(input)?,
        None => TrainState::new(load_weights_or_default(&run.weights)?),
    };

    let manifest = RunManifest::new(
        "train",
        run.seed,
        vec![run.suite.clone()],
        vec![run.out.clone()],
        &run,
    )
    .map_err(internal)?;
    std::fs::create_dir_all(&run.out).map_err(internal)?;
    manifest.write(&run.out.join("manifest.json")).map_err(internal)?;

    let mut csv = String::from("epoch,step,phase,total,prediction,score,decision,planning,imitation,skipped\n");
    let csv_path = run.out.join("loss.csv");
    let batches: Vec<Vec<&Scenario>> = scenarios
        .chunks(config.batch_size.max(1))
        .map(|chunk| chunk.iter().collect())
        .collect();

    let mut aborted = false;
    'epochs: for epoch in 0..config.pretrain_epochs + config.epochs {
        let pretrain = epoch < config.pretrain_epochs;
        let phase = if pretrain { "pretrain" } else { "joint" };
        for batch in &batches {
            let report = if pretrain {
                pretrain_step(batch, &mut state, &config, &loss_weights)
            } else {
                train_step(batch, &mut state, &config, &loss_weights)
            }
            .map_err(internal)?;
            csv.push_str(&format!(
                "{epoch},{},{phase},{},{},{},{},{},{},{}\n",
                state.step,
                report.total,
                report.losses.prediction,
                report.losses.score,
                report.losses.decision,
                report.losses.planning,
                report.losses.imitation,
                report.skipped.len()
            ));
            info!("epoch {epoch} step {} {phase} loss {:.4}", state.step, report.total);
            if !report.total.is_finite() {
                // keep the last good checkpoint and stop
                aborted = true;
                break 'epochs;
            }
        }
        save_checkpoint(&state, &run.out.join(format!("checkpoint-epoch-{epoch:03}.json")))
            .map_err(internal)?;
    }
    save_checkpoint(&state, &run.out.join("checkpoint.json")).map_err(internal)?;
    diffplan_core::residuals::save_weights(&state.weights, &run.out.join("weights.json"))
        .map_err(internal)?;
    state
        .toy
        .save(&run.out.join("toy.json"))
        .map_err(CliError::Internal)?;
    write_text(&csv_path, &csv)?;
    if aborted {
        Err(CliError::Internal(
            "non-finite loss; aborted with last good checkpoint retained".into(),
        ))
    } else {
        Ok(Outcome::Success)
    }
}

// -------------------------------------------------------------------------
// gen-suite
// -------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
pub struct GenSuiteRun {
    pub out: PathBuf,
    pub seed: u64,
    pub count: usize,
}

pub fn gen_suite(run: GenSuiteRun) -> CliResult {
    let manifest = RunManifest::new("gen-suite", run.seed, vec![], vec![run.out.clone()], &run)
        .map_err(internal)?;
    std::fs::create_dir_all(&run.out).map_err(internal)?;
    manifest.write(&run.out.join("manifest.json")).map_err(internal)?;
    for scenario in generate_suite(run.seed, run.count) {
        let text = save_scenario_string(&scenario).map_err(internal)?;
        write_text(&run.out.join(format!("{}.json", scenario.name)), &text)?;
    }
    info!("generated {} scenarios in {}", run.count, run.out.display());
    Ok(Outcome::Success)
}

// -------------------------------------------------------------------------
// plot-data
// -------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
pub struct PlotRun {
    pub log: PathBuf,
    pub out: Option<PathBuf>,
}

pub fn plot_data(run: PlotRun) -> CliResult {
    let text = std::fs::read_to_string(&run.log).map_err(input)?;
    let log = episode_from_jsonl(&text).map_err(input)?;
    let mut csv = String::from("time,accel,steer,speed,maneuver\n");
    for step in &log.steps {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            step.index as f64 * log.dt,
            step.control.accel,
            step.control.steer,
            step.ego.speed,
            step.maneuver
        ));
    }
    match &run.out {
        Some(path) => write_text(path, &csv)?,
        None => {
            std::io::stdout()
                .write_all(csv.as_bytes())
                .map_err(internal)?;
        }
    }
    Ok(Outcome::Success)
}

// -------------------------------------------------------------------------
// rerun
// -------------------------------------------------------------------------

pub fn rerun(path: &Path) -> CliResult {
    let manifest = RunManifest::load(path).map_err(input)?;
    let config = manifest.config.clone();
    match manifest.command.as_str() {
        "solve" => solve(serde_json::from_value(config).map_err(input)?),
        "simulate" => simulate(serde_json::from_value(config).map_err(input)?),
        "train" => train(serde_json::from_value(config).map_err(input)?),
        "gen-suite" => gen_suite(serde_json::from_value(config).map_err(input)?),
        other => Err(CliError::Input(format!("manifest for unknown command `{other}`"))),
    }
}
