//! Pluggable initialization strategies.
//!
//! An initializer produces candidate futures — joint agent predictions plus,
//! per candidate maneuver, an initial ego control sequence, a decision
//! probability vector, and a score. Strategies live behind the
//! [`Initializer`] trait and are selected by name at runtime:
//!
//! * `constant-velocity` (alias `constant-velocity-only`) — agents roll
//!   along their lanes at constant speed, uniform decisions, zero controls.
//! * `heuristic` — path-tracking controls toward each candidate lane with
//!   decisions scored by coarse residual cost.
//! * `toy:<params-file>` — a small learnable map from scene features to
//!   decision logits and control offsets on top of the heuristic controls.

mod heuristic;
mod toy;

pub use heuristic::{candidate_controls, HeuristicInitializer};
pub use toy::{
    control_offsets, masked_softmax, scene_features, toy_evaluate, toy_forward, ToyEval,
    ToyInitializer, ToyParams, FEATURE_COUNT, TOY_OUTPUTS,
};

use crate::residuals::{maneuver_slot, AgentPredictions, CostWeights, PredictedTrack, MANEUVERS};
use crate::vehicle::{rollout, ControlInput, EgoState, Trajectory, VehicleParams};
use crate::world::{nearest_lane, project_to_frenet, target_lane, Scenario};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InitializerError {
    #[error("unknown initializer `{0}` (expected constant-velocity, heuristic, or toy:<file>)")]
    UnknownName(String),
    #[error("toy parameter file: {0}")]
    ToyParams(String),
    #[error("no available maneuver from lane {0}")]
    NoManeuver(u32),
    #[error("ground truth unavailable")]
    MissingGroundTruth,
}

/// One candidate future: the ego plan keyed to a maneuver plus its score and
/// decision probabilities. Agent predictions are shared across futures.
#[derive(Clone, Debug)]
pub struct Future {
    pub maneuver: i8,
    pub ego_controls: Vec<ControlInput>,
    pub ego_trajectory: Trajectory,
    pub score: f64,
    pub decision_probs: [f64; 3],
}

#[derive(Clone, Debug)]
pub struct InitializerOutput {
    pub futures: Vec<Future>,
    pub predictions: AgentPredictions,
    pub mask: [bool; 3],
}

impl InitializerOutput {
    /// The future the optimizer is initialized from: highest score, ties to
    /// the earliest.
    pub fn most_likely(&self) -> &Future {
        let mut best = 0;
        for (i, f) in self.futures.iter().enumerate() {
            if f.score > self.futures[best].score {
                best = i;
            }
        }
        &self.futures[best]
    }
}

/// Everything an initializer may look at.
pub struct InitContext<'a> {
    pub scenario: &'a Scenario,
    pub ego: &'a EgoState,
    pub start_step: usize,
    pub horizon: usize,
    pub weights: &'a CostWeights,
    pub vehicle: &'a VehicleParams,
}

pub trait Initializer: Send + Sync {
    fn name(&self) -> String;
    fn initialize(&self, ctx: &InitContext) -> Result<InitializerOutput, InitializerError>;
}

/// Looks a strategy up by its registry name.
pub fn initializer_by_name(spec: &str) -> Result<Box<dyn Initializer>, InitializerError> {
    match spec {
        "constant-velocity" | "constant-velocity-only" => {
            Ok(Box::new(ConstantVelocityInitializer))
        }
        "heuristic" => Ok(Box::new(HeuristicInitializer)),
        other => {
            if let Some(path) = other.strip_prefix("toy:") {
                let params = ToyParams::load(std::path::Path::new(path))
                    .map_err(|e| InitializerError::ToyParams(e.to_string()))?;
                Ok(Box::new(ToyInitializer::new(params)))
            } else {
                Err(InitializerError::UnknownName(other.to_string()))
            }
        }
    }
}

/// Registered strategy names (the toy strategy takes a parameter file).
pub fn registry_names() -> &'static [&'static str] {
    &["constant-velocity", "heuristic", "toy:<params-file>"]
}

/// Advances every agent along its nearest lane at constant speed, keeping
/// its lateral offset; agents without a lane (offset beyond half width)
/// continue along their heading. Poses cover plan steps `1..=horizon`.
pub fn constant_velocity_predict(
    scenario: &Scenario,
    start_step: usize,
    horizon: usize,
) -> AgentPredictions {
    let mut tracks = Vec::with_capacity(scenario.agents.len());
    let dt = scenario.meta.dt;
    for (idx, agent) in scenario.agents.iter().enumerate() {
        let pose = agent.pose_at(start_step);
        let lane = scenario
            .lanes
            .iter()
            .find(|l| l.id == nearest_lane([pose.x, pose.y], &scenario.lanes))
            .filter(|l| project_to_frenet([pose.x, pose.y], l).d.abs() <= l.width / 2.0);
        let mut poses = Vec::with_capacity(horizon);
        match lane {
            Some(lane) => {
                let f = project_to_frenet([pose.x, pose.y], lane);
                for k in 1..=horizon {
                    let s = f.s + pose.speed * dt * k as f64;
                    let p = lane.centerline.embed(s, f.d);
                    poses.push(crate::world::AgentPose {
                        x: p[0],
                        y: p[1],
                        heading: lane.centerline.heading_at(s),
                        speed: pose.speed,
                    });
                }
            }
            None => {
                let (sin_h, cos_h) = pose.heading.sin_cos();
                for k in 1..=horizon {
                    let dist = pose.speed * dt * k as f64;
                    poses.push(crate::world::AgentPose {
                        x: pose.x + dist * cos_h,
                        y: pose.y + dist * sin_h,
                        heading: pose.heading,
                        speed: pose.speed,
                    });
                }
            }
        }
        tracks.push(PredictedTrack {
            agent_index: idx,
            poses,
        });
    }
    AgentPredictions { tracks }
}

/// Available maneuvers from the ego's current lane.
pub fn availability(scenario: &Scenario, ego: &EgoState) -> (u32, [bool; 3]) {
    let current = nearest_lane(ego.position(), &scenario.lanes);
    let mut mask = [false; 3];
    for m in MANEUVERS {
        mask[maneuver_slot(m)] = target_lane(current, m, &scenario.lanes).is_some();
    }
    (current, mask)
}

/// Agent predictions at constant velocity, uniform decisions, zero controls.
/// This is the ablation baseline: no informed initialization at all.
pub struct ConstantVelocityInitializer;

impl Initializer for ConstantVelocityInitializer {
    fn name(&self) -> String {
        "constant-velocity".into()
    }

    fn initialize(&self, ctx: &InitContext) -> Result<InitializerOutput, InitializerError> {
        let (current, mask) = availability(ctx.scenario, ctx.ego);
        let available: Vec<i8> = MANEUVERS
            .into_iter()
            .filter(|m| mask[maneuver_slot(*m)])
            .collect();
        if available.is_empty() {
            return Err(InitializerError::NoManeuver(current));
        }
        let predictions = constant_velocity_predict(ctx.scenario, ctx.start_step, ctx.horizon);
        let mut probs = [0.0; 3];
        for m in &available {
            probs[maneuver_slot(*m)] = 1.0 / available.len() as f64;
        }
        let controls = vec![ControlInput::new(0.0, 0.0); ctx.horizon];
        let futures = available
            .iter()
            .map(|m| Future {
                maneuver: *m,
                ego_controls: controls.clone(),
                ego_trajectory: rollout(ctx.ego, &controls, ctx.vehicle),
                score: 1.0 / available.len() as f64,
                decision_probs: probs,
            })
            .collect();
        Ok(InitializerOutput {
            futures,
            predictions,
            mask,
        })
    }
}

/// Index of the future closest to ground truth: smallest sum over vehicles of
/// the L2 trajectory distance.
pub fn select_best_future(
    output: &InitializerOutput,
    scenario: &Scenario,
    start_step: usize,
) -> Result<usize, InitializerError> {
    let horizon = output
        .futures
        .first()
        .map(|f| f.ego_controls.len())
        .unwrap_or(0);
    let gt = &scenario.ego.ground_truth;
    if gt.len() < horizon + 1 {
        return Err(InitializerError::MissingGroundTruth);
    }
    let mut best = (0usize, f64::INFINITY);
    for (k, future) in output.futures.iter().enumerate() {
        let mut total = 0.0;
        // ego displacement error
        let mut ego_sq = 0.0;
        for step in 1..=horizon {
            let p = future.ego_trajectory.states[step];
            let g = gt[step];
            ego_sq += (p.x - g.x).powi(2) + (p.y - g.y).powi(2);
        }
        total += ego_sq.sqrt();
        // agent displacement errors (shared across futures, kept for the
        // general contract)
        for track in &output.predictions.tracks {
            let replay = scenario.agent_future(track.agent_index, start_step);
            let mut sq = 0.0;
            for (p, g) in track.poses.iter().zip(replay.iter()) {
                sq += (p.x - g.x).powi(2) + (p.y - g.y).powi(2);
            }
            total += sq.sqrt();
        }
        if total < best.1 {
            best = (k, total);
        }
    }
    Ok(best.0)
}

#[cfg(test)]
mod tests;
