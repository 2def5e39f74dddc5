//! Closed-loop log-replay simulation.
//!
//! At every step the planner replans from the current ego state, the first
//! planned control is applied through the vehicle model, and the other
//! agents replay their recorded poses. Episodes end on collision, leaving
//! the drivable area, a solver failure, or the step budget.

use super::collision::{collision_check, Footprint};
use crate::decision::{compliance_check, DEFAULT_COMPLIANCE_TOL};
use crate::initializer::Initializer;
use crate::planner::{plan, vehicle_params};
use crate::residuals::CostWeights;
use crate::solver::SolverConfig;
use crate::vehicle::{step, ControlInput, EgoState};
use crate::world::{project_to_frenet, Scenario, SignalState};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("log parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Completed,
    Collision,
    OffDrivable,
    SolverFailure,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AgentMeta {
    pub id: u64,
    pub length: f64,
    pub width: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpisodeStep {
    pub index: usize,
    /// Ego state before applying the control.
    pub ego: EgoState,
    pub control: ControlInput,
    pub maneuver: i8,
    pub converged: bool,
    pub compliant: bool,
    /// Red flag of the current-lane signal, when one exists.
    pub signal_red: Option<bool>,
    /// Replayed agent poses at this step, aligned with the agent metadata.
    pub agents: Vec<[f64; 4]>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub scenario: String,
    pub seed: u64,
    pub initial_lane: u32,
    pub dt: f64,
    pub wheelbase: f64,
    pub ego_length: f64,
    pub ego_width: f64,
    pub agent_meta: Vec<AgentMeta>,
    pub steps: Vec<EpisodeStep>,
    /// Ego state after the final applied control.
    pub final_ego: EgoState,
    pub termination: Termination,
    /// Diagnostic for solver failures.
    pub failure: Option<String>,
}

/// Runs one closed-loop episode of at most `max_steps` replans.
pub fn closed_loop_run(
    scenario: &Scenario,
    initializer: &dyn Initializer,
    weights: &CostWeights,
    config: &SolverConfig,
    max_steps: usize,
    seed: u64,
) -> EpisodeLog {
    let vehicle = vehicle_params(scenario);
    let mut ego = scenario.ego.start;
    let mut steps = Vec::new();
    let mut termination = Termination::Completed;
    let mut failure = None;

    let agent_meta: Vec<AgentMeta> = scenario
        .agents
        .iter()
        .map(|a| AgentMeta {
            id: a.id,
            length: a.length,
            width: a.width,
        })
        .collect();

    for k in 0..max_steps {
        let abs_step = scenario.current_step() + k;
        let outcome = match plan(scenario, &ego, abs_step, initializer, weights, config) {
            Ok(o) => o,
            Err(e) => {
                termination = Termination::SolverFailure;
                failure = Some(e.to_string());
                break;
            }
        };
        let control = outcome.result.variables.controls[0];
        let compliant =
            compliance_check(&outcome.result.variables.decisions, DEFAULT_COMPLIANCE_TOL)
                .compliant;
        let signal_red = scenario
            .signals
            .iter()
            .find(|s| s.lane_id == outcome.ctx.current_lane)
            .map(|s| s.state_at(abs_step) == SignalState::Red);
        steps.push(EpisodeStep {
            index: k,
            ego,
            control,
            maneuver: outcome.result.maneuver,
            converged: outcome.result.converged,
            compliant,
            signal_red,
            agents: scenario
                .agents
                .iter()
                .map(|a| {
                    let p = a.pose_at(abs_step);
                    [p.x, p.y, p.heading, p.speed]
                })
                .collect(),
        });

        ego = step(&ego, &control, &vehicle);

        // collision against the replayed agents at the new step
        let ego_fp = Footprint::new(ego.x, ego.y, ego.heading, scenario.ego.length, scenario.ego.width);
        let hit = scenario.agents.iter().any(|a| {
            let p = a.pose_at(abs_step + 1);
            collision_check(
                &ego_fp,
                &Footprint::new(p.x, p.y, p.heading, a.length, a.width),
            )
        });
        if hit {
            termination = Termination::Collision;
            break;
        }
        if off_drivable(scenario, ego.position()) {
            termination = Termination::OffDrivable;
            break;
        }
    }

    EpisodeLog {
        scenario: scenario.name.clone(),
        seed,
        initial_lane: crate::world::nearest_lane(scenario.ego.start.position(), &scenario.lanes),
        dt: scenario.meta.dt,
        wheelbase: scenario.ego.wheelbase,
        ego_length: scenario.ego.length,
        ego_width: scenario.ego.width,
        agent_meta,
        steps,
        final_ego: ego,
        termination,
        failure,
    }
}

/// Outside the drivable area: farther than half a width beyond every lane's
/// boundary, i.e. |offset| > width for every lane.
pub fn off_drivable(scenario: &Scenario, position: [f64; 2]) -> bool {
    scenario
        .lanes
        .iter()
        .all(|lane| project_to_frenet(position, lane).d.abs() > lane.width)
}

/// Verifies that every consecutive state pair satisfies the vehicle step map
/// exactly for the logged control.
pub fn verify_dynamic_feasibility(log: &EpisodeLog) -> bool {
    let vehicle = crate::vehicle::VehicleParams::new(
        log.wheelbase,
        log.ego_length,
        log.ego_width,
        log.dt,
    );
    for pair in log.steps.windows(2) {
        if step(&pair[0].ego, &pair[0].control, &vehicle) != pair[1].ego {
            return false;
        }
    }
    if let Some(last) = log.steps.last() {
        if step(&last.ego, &last.control, &vehicle) != log.final_ego {
            return false;
        }
    }
    true
}

// -------------------------------------------------------------------------
// episode-v1 JSON lines
// -------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum LogLine {
    Header {
        schema: String,
        scenario: String,
        seed: u64,
        initial_lane: u32,
        dt: f64,
        wheelbase: f64,
        ego_length: f64,
        ego_width: f64,
        agents: Vec<AgentMeta>,
    },
    Step(EpisodeStep),
    End {
        termination: Termination,
        final_ego: EgoState,
        steps: usize,
        failure: Option<String>,
    },
}

/// Serializes an episode to `episode-v1` JSON lines (header, one line per
/// step, end record).
pub fn episode_to_jsonl(log: &EpisodeLog) -> String {
    let mut out = String::new();
    let header = LogLine::Header {
        schema: "episode-v1".into(),
        scenario: log.scenario.clone(),
        seed: log.seed,
        initial_lane: log.initial_lane,
        dt: log.dt,
        wheelbase: log.wheelbase,
        ego_length: log.ego_length,
        ego_width: log.ego_width,
        agents: log.agent_meta.clone(),
    };
    out.push_str(&serde_json::to_string(&header).expect("header"));
    out.push('\n');
    for step in &log.steps {
        out.push_str(&serde_json::to_string(&LogLine::Step(step.clone())).expect("step"));
        out.push('\n');
    }
    let end = LogLine::End {
        termination: log.termination,
        final_ego: log.final_ego,
        steps: log.steps.len(),
        failure: log.failure.clone(),
    };
    out.push_str(&serde_json::to_string(&end).expect("end"));
    out.push('\n');
    out
}

pub fn episode_from_jsonl(text: &str) -> Result<EpisodeLog, EpisodeError> {
    let mut header = None;
    let mut steps = Vec::new();
    let mut end = None;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: LogLine = serde_json::from_str(line)
            .map_err(|e| EpisodeError::Parse(format!("line {}: {e}", i + 1)))?;
        match parsed {
            LogLine::Header { .. } => header = Some(parsed),
            LogLine::Step(s) => steps.push(s),
            LogLine::End { .. } => end = Some(parsed),
        }
    }
    let Some(LogLine::Header {
        schema,
        scenario,
        seed,
        initial_lane,
        dt,
        wheelbase,
        ego_length,
        ego_width,
        agents,
    }) = header
    else {
        return Err(EpisodeError::Parse("missing header line".into()));
    };
    if schema != "episode-v1" {
        return Err(EpisodeError::Parse(format!("unsupported schema `{schema}`")));
    }
    let Some(LogLine::End {
        termination,
        final_ego,
        failure,
        ..
    }) = end
    else {
        return Err(EpisodeError::Parse("missing end line".into()));
    };
    Ok(EpisodeLog {
        scenario,
        seed,
        initial_lane,
        dt,
        wheelbase,
        ego_length,
        ego_width,
        agent_meta: agents,
        steps,
        final_ego,
        termination,
        failure,
    })
}
