//! Loss functions of the outer learning problem.

use crate::initializer::InitializerOutput;
use crate::scalar::Real;
use crate::vehicle::EgoState;
use crate::world::Scenario;
use serde::{Deserialize, Serialize};

/// Loss weights, named by role. Defaults: prediction 0.5, score 1, decision
/// 1, imitation 1, planning 0.1.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LossWeights {
    pub prediction: f64,
    pub score: f64,
    pub decision: f64,
    pub imitation: f64,
    pub planning: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            prediction: 0.5,
            score: 1.0,
            decision: 1.0,
            imitation: 1.0,
            planning: 0.1,
        }
    }
}

/// Per-component loss values of one scenario (or a batch mean).
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub prediction: f64,
    pub score: f64,
    pub decision: f64,
    pub planning: f64,
    pub imitation: f64,
}

impl LossBreakdown {
    pub fn total(&self, lw: &LossWeights) -> f64 {
        total_loss(self, lw)
    }

    pub fn scaled_add(&mut self, other: &LossBreakdown, scale: f64) {
        self.prediction += scale * other.prediction;
        self.score += scale * other.score;
        self.decision += scale * other.decision;
        self.planning += scale * other.planning;
        self.imitation += scale * other.imitation;
    }
}

/// Element-wise Huber: `0.5 x^2 / delta` for `|x| <= delta`, else
/// `|x| - 0.5 delta`.
pub fn huber<S: Real>(x: S, delta: f64) -> S {
    if x.value().abs() <= delta {
        (x * x).scale(0.5 / delta)
    } else {
        x.abs().add_value(-0.5 * delta)
    }
}

/// Sum of element-wise Huber losses.
pub fn smooth_l1(values: &[f64], delta: f64) -> f64 {
    values.iter().map(|v| huber(*v, delta)).sum()
}

/// Smooth L1 over per-coordinate position differences of two trajectories,
/// skipping the shared start state.
pub fn position_smooth_l1<S: Real>(
    planned: &[[S; 4]],
    truth: &[EgoState],
    delta: f64,
) -> S {
    let mut total = S::constant(0.0);
    for (p, g) in planned.iter().zip(truth.iter()).skip(1) {
        total = total + huber(p[0] - S::constant(g.x), delta) + huber(p[1] - S::constant(g.y), delta);
    }
    total
}

/// Prediction loss: smooth L1 of the best future against ground truth, over
/// the ego and every predicted agent.
pub fn prediction_loss(
    output: &InitializerOutput,
    best: usize,
    scenario: &Scenario,
    start_step: usize,
    delta: f64,
) -> f64 {
    let future = &output.futures[best];
    let horizon = future.ego_controls.len();
    let states: Vec<[f64; 4]> = future
        .ego_trajectory
        .states
        .iter()
        .map(|s| s.to_array())
        .collect();
    let mut total = position_smooth_l1(&states, &scenario.ego.ground_truth[..=horizon], delta);
    for track in &output.predictions.tracks {
        let replay = scenario.agent_future(track.agent_index, start_step);
        for (p, g) in track.poses.iter().zip(replay.iter()) {
            total += huber(p.x - g.x, delta) + huber(p.y - g.y, delta);
        }
    }
    total
}

/// Cross-entropy of the best future's score.
pub fn score_loss(scores: &[f64], best: usize) -> f64 {
    -scores[best].max(1e-12).ln()
}

/// Cross-entropy of the initialized decision probability at the optimized
/// maneuver.
pub fn decision_loss(probs: &[f64; 3], maneuver: i8) -> f64 {
    let slot = crate::residuals::maneuver_slot(maneuver);
    -probs[slot].max(1e-12).ln()
}

/// Final total squared residual of the solve.
pub fn planning_loss(result: &crate::solver::SolveResult) -> f64 {
    result.final_cost()
}

/// Smooth L1 between the solved trajectory and the demonstrated one.
pub fn imitation_loss(
    trajectory: &crate::vehicle::Trajectory,
    truth: &[EgoState],
    delta: f64,
) -> f64 {
    let states: Vec<[f64; 4]> = trajectory.states.iter().map(|s| s.to_array()).collect();
    let horizon = trajectory.controls.len();
    position_smooth_l1(&states, &truth[..=horizon.min(truth.len() - 1)], delta)
}

pub fn total_loss(parts: &LossBreakdown, lw: &LossWeights) -> f64 {
    lw.prediction * parts.prediction
        + lw.score * parts.score
        + lw.decision * parts.decision
        + lw.planning * parts.planning
        + lw.imitation * parts.imitation
}

/// Pretraining considers only the prediction and score terms.
pub fn pretrain_loss(parts: &LossBreakdown, lw: &LossWeights) -> f64 {
    lw.prediction * parts.prediction + lw.score * parts.score
}
