//! Joint training step: toy initializer -> differentiable solve -> losses ->
//! exact gradients via tangent seeds -> adaptive-moment update.
//!
//! Trainable parameters are the logs of the learnable cost weights (keeping
//! them positive) and the toy initializer's flat parameter vector. The fixed
//! hard-constraint weights are not part of the parameter vector at all.

use super::adam::AdamState;
use super::losses::{
    decision_loss, position_smooth_l1, prediction_loss, score_loss, LossBreakdown, LossWeights,
};
use crate::initializer::{
    control_offsets, select_best_future, toy_evaluate, InitContext, ToyParams, TOY_OUTPUTS,
};
use crate::planner::vehicle_params;
use crate::residuals::{build_context, maneuver_slot, CostWeights, LEARNABLE_COUNT};
use crate::scalar::Dual;
use crate::solver::{solve_with_directions, PlanVariables, SolveError, SolverConfig, TangentSeed};
use crate::vehicle::{step_generic, ControlInput, EgoState, VehicleParams};
use crate::world::Scenario;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub pretrain_epochs: usize,
    pub huber_delta: f64,
    pub solver: SolverConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 2e-4,
            batch_size: 32,
            epochs: 20,
            pretrain_epochs: 3,
            huber_delta: 1.0,
            solver: SolverConfig::training(),
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no scenarios in batch")]
    EmptyBatch,
    #[error(transparent)]
    Initializer(#[from] crate::initializer::InitializerError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainState {
    pub weights: CostWeights,
    pub toy: ToyParams,
    pub adam: AdamState,
    pub step: u64,
}

impl TrainState {
    pub fn new(weights: CostWeights) -> Self {
        TrainState {
            weights,
            toy: ToyParams::zeros(),
            adam: AdamState::new(LEARNABLE_COUNT + ToyParams::dim()),
            step: 0,
        }
    }

    fn params(&self) -> Vec<f64> {
        let mut p: Vec<f64> = self
            .weights
            .learnable()
            .iter()
            .map(|w| w.max(1e-12).ln())
            .collect();
        p.extend(self.toy.flat());
        p
    }

    /// Writes back only the parameters that actually moved, so untouched
    /// weights stay bit-identical (the log/exp round trip is not exact).
    fn apply_changed(&mut self, before: &[f64], after: &[f64]) {
        let mut learn = self.weights.learnable();
        for i in 0..LEARNABLE_COUNT {
            if after[i] != before[i] {
                learn[i] = after[i].exp();
            }
        }
        self.weights.set_learnable(&learn);
        let mut flat = self.toy.flat();
        for (p, f) in flat.iter_mut().enumerate() {
            if after[LEARNABLE_COUNT + p] != before[LEARNABLE_COUNT + p] {
                *f = after[LEARNABLE_COUNT + p];
            }
        }
        self.toy = ToyParams::from_flat(&flat);
    }
}

/// Result of one training (or pretraining) step.
#[derive(Clone, Debug)]
pub struct StepReport {
    /// Batch-mean losses.
    pub losses: LossBreakdown,
    pub total: f64,
    /// Scenarios skipped for non-finite gradients.
    pub skipped: Vec<String>,
}

/// Dual rollout of a control sequence with a tangent on the controls.
fn rollout_dual(
    start: &EgoState,
    controls: &[ControlInput],
    d_controls: &[[f64; 2]],
    vehicle: &VehicleParams,
) -> Vec<[Dual; 4]> {
    let mut states = Vec::with_capacity(controls.len() + 1);
    states.push([
        Dual::constant(start.x),
        Dual::constant(start.y),
        Dual::constant(start.heading),
        Dual::constant(start.speed),
    ]);
    for (k, u) in controls.iter().enumerate() {
        let ud = [
            Dual::new(u.accel, d_controls[k][0]),
            Dual::new(u.steer, d_controls[k][1]),
        ];
        let next = step_generic(*states.last().unwrap(), ud, vehicle);
        states.push(next);
    }
    states
}

/// Basis tangent of the control offsets for one coefficient output
/// (the offsets are linear in the coefficients).
fn offset_basis(coeff: usize, horizon: usize) -> Vec<[f64; 2]> {
    let mut unit = [0.0; 4];
    unit[coeff] = 1.0;
    control_offsets(unit, horizon)
}

/// Softmax Jacobian column: d probs / d logit_j at the given distribution.
fn softmax_column(probs: &[f64; 3], j: usize) -> [f64; 3] {
    let mut col = [0.0; 3];
    for i in 0..3 {
        let delta = if i == j { 1.0 } else { 0.0 };
        col[i] = probs[i] * (delta - probs[j]);
    }
    col
}

struct ScenarioGrads {
    losses: LossBreakdown,
    /// Per-direction gradient of the weighted total loss: 9 log-weight
    /// directions then 7 toy-output directions.
    directions: Vec<f64>,
    param_jacobian: Vec<[f64; TOY_OUTPUTS]>,
}

fn scenario_gradient(
    scenario: &Scenario,
    state: &TrainState,
    config: &TrainingConfig,
    loss_weights: &LossWeights,
) -> Result<ScenarioGrads, TrainError> {
    let vehicle = vehicle_params(scenario);
    let horizon = scenario.meta.horizon_steps;
    let start_step = scenario.current_step();
    let ego = scenario.ego.start;
    let init_ctx = InitContext {
        scenario,
        ego: &ego,
        start_step,
        horizon,
        weights: &state.weights,
        vehicle: &vehicle,
    };
    let eval = toy_evaluate(&state.toy, &init_ctx)?;
    let best = select_best_future(&eval.output, scenario, start_step)?;
    let best_slot = maneuver_slot(eval.output.futures[best].maneuver);

    let ctx = build_context(
        scenario,
        &eval.output.predictions,
        &ego,
        start_step,
        horizon,
        state.weights.collision_margin,
    );
    let most_likely = eval.output.most_likely();
    let init = PlanVariables {
        controls: most_likely.ego_controls.clone(),
        decisions: crate::decision::init_decisions(most_likely.decision_probs, eval.output.mask, horizon)
            .map_err(SolveError::from)?,
    };

    // seeds: learnable weights in log space, then the seven toy outputs
    let learn = state.weights.learnable();
    let mut seeds = Vec::with_capacity(LEARNABLE_COUNT + TOY_OUTPUTS);
    for i in 0..LEARNABLE_COUNT {
        let mut seed = TangentSeed::default();
        if learn[i] > 0.0 {
            seed.weights[i] = learn[i]; // d w / d log w
        }
        seeds.push(seed);
    }
    for j in 0..3 {
        let col = softmax_column(&eval.probs, j);
        seeds.push(TangentSeed {
            init_decisions: vec![col; horizon],
            ..Default::default()
        });
    }
    for c in 0..4 {
        seeds.push(TangentSeed {
            init_controls: offset_basis(c, horizon),
            ..Default::default()
        });
    }

    let (result, tangents) =
        solve_with_directions(&ego, &init, &ctx, &state.weights, &config.solver, &vehicle, &seeds)?;

    // plain losses
    let delta_h = config.huber_delta;
    let scores: Vec<f64> = eval.output.futures.iter().map(|f| f.score).collect();
    let planned: Vec<[f64; 4]> = result.trajectory.states.iter().map(|s| s.to_array()).collect();
    let losses = LossBreakdown {
        prediction: prediction_loss(&eval.output, best, scenario, start_step, delta_h),
        score: score_loss(&scores, best),
        decision: decision_loss(&eval.probs, result.maneuver),
        planning: result.final_cost(),
        imitation: position_smooth_l1(&planned, &scenario.ego.ground_truth[..=horizon], delta_h),
    };

    // per-direction derivative of the weighted total
    let alpha_slot = maneuver_slot(result.maneuver);
    let mut directions = Vec::with_capacity(seeds.len());
    for (d, tangent) in tangents.iter().enumerate() {
        let mut g = loss_weights.planning * tangent.d_final_cost;
        // imitation through the solved controls
        let dual_states = rollout_dual(
            &ego,
            &result.variables.controls,
            &tangent.d_controls,
            &vehicle,
        );
        let imit = position_smooth_l1(&dual_states, &scenario.ego.ground_truth[..=horizon], delta_h);
        g += loss_weights.imitation * imit.t;

        if d >= LEARNABLE_COUNT {
            let j = d - LEARNABLE_COUNT;
            if j < 3 {
                // direct logit paths: score and decision cross-entropies
                g += loss_weights.score * (eval.probs[j] - if j == best_slot { 1.0 } else { 0.0 });
                g += loss_weights.decision
                    * (eval.probs[j] - if j == alpha_slot { 1.0 } else { 0.0 });
            } else {
                // coefficient paths: prediction loss through the best
                // future's ego rollout (offsets are shared by every future)
                let c = j - 3;
                let basis = offset_basis(c, horizon);
                let dual_best = rollout_dual(
                    &ego,
                    &eval.output.futures[best].ego_controls,
                    &basis,
                    &vehicle,
                );
                let pred =
                    position_smooth_l1(&dual_best, &scenario.ego.ground_truth[..=horizon], delta_h);
                g += loss_weights.prediction * pred.t;
            }
        }
        directions.push(g);
    }

    Ok(ScenarioGrads {
        losses,
        directions,
        param_jacobian: eval.param_jacobian,
    })
}

/// One joint training step over a batch. Gradients are accumulated in batch
/// order (deterministic reduction); scenarios with non-finite gradients are
/// skipped and reported. Fixed weights are untouched by construction.
pub fn train_step(
    batch: &[&Scenario],
    state: &mut TrainState,
    config: &TrainingConfig,
    loss_weights: &LossWeights,
) -> Result<StepReport, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let dim = LEARNABLE_COUNT + ToyParams::dim();
    let mut grad = vec![0.0; dim];
    let mut losses = LossBreakdown::default();
    let mut skipped = Vec::new();
    let mut used = 0usize;

    for scenario in batch {
        let g = scenario_gradient(scenario, state, config, loss_weights)?;
        let finite = g.directions.iter().all(|v| v.is_finite());
        if !finite {
            skipped.push(scenario.name.clone());
            continue;
        }
        for i in 0..LEARNABLE_COUNT {
            grad[i] += g.directions[i];
        }
        for p in 0..ToyParams::dim() {
            let mut acc = 0.0;
            for j in 0..TOY_OUTPUTS {
                acc += g.param_jacobian[p][j] * g.directions[LEARNABLE_COUNT + j];
            }
            grad[LEARNABLE_COUNT + p] += acc;
        }
        losses.scaled_add(&g.losses, 1.0);
        used += 1;
    }

    if used > 0 {
        for v in &mut grad {
            *v /= used as f64;
        }
        let scale = 1.0 / used as f64;
        losses = LossBreakdown {
            prediction: losses.prediction * scale,
            score: losses.score * scale,
            decision: losses.decision * scale,
            planning: losses.planning * scale,
            imitation: losses.imitation * scale,
        };
        let before = state.params();
        let mut params = before.clone();
        state.adam.update(&mut params, &grad, config.learning_rate);
        state.apply_changed(&before, &params);
        state.step += 1;
    }

    Ok(StepReport {
        total: losses.total(loss_weights),
        losses,
        skipped,
    })
}

/// Pretraining step: prediction and score losses only, updating only the toy
/// parameters (the optimizer is not in the loop).
pub fn pretrain_step(
    batch: &[&Scenario],
    state: &mut TrainState,
    config: &TrainingConfig,
    loss_weights: &LossWeights,
) -> Result<StepReport, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let dim = LEARNABLE_COUNT + ToyParams::dim();
    let mut grad = vec![0.0; dim];
    let mut losses = LossBreakdown::default();
    let mut skipped = Vec::new();
    let mut used = 0usize;

    for scenario in batch {
        let vehicle = vehicle_params(scenario);
        let horizon = scenario.meta.horizon_steps;
        let start_step = scenario.current_step();
        let ego = scenario.ego.start;
        let init_ctx = InitContext {
            scenario,
            ego: &ego,
            start_step,
            horizon,
            weights: &state.weights,
            vehicle: &vehicle,
        };
        let eval = toy_evaluate(&state.toy, &init_ctx)?;
        let best = select_best_future(&eval.output, scenario, start_step)?;
        let best_slot = maneuver_slot(eval.output.futures[best].maneuver);
        let scores: Vec<f64> = eval.output.futures.iter().map(|f| f.score).collect();
        let delta_h = config.huber_delta;

        let part = LossBreakdown {
            prediction: prediction_loss(&eval.output, best, scenario, start_step, delta_h),
            score: score_loss(&scores, best),
            ..Default::default()
        };

        let mut out_grad = [0.0; TOY_OUTPUTS];
        for (j, og) in out_grad.iter_mut().enumerate().take(3) {
            *og = loss_weights.score
                * (eval.probs[j] - if j == best_slot { 1.0 } else { 0.0 });
        }
        for c in 0..4 {
            let basis = offset_basis(c, horizon);
            let dual_best = rollout_dual(
                &ego,
                &eval.output.futures[best].ego_controls,
                &basis,
                &vehicle,
            );
            let pred =
                position_smooth_l1(&dual_best, &scenario.ego.ground_truth[..=horizon], delta_h);
            out_grad[3 + c] = loss_weights.prediction * pred.t;
        }
        if !out_grad.iter().all(|v| v.is_finite()) {
            skipped.push(scenario.name.clone());
            continue;
        }
        for p in 0..ToyParams::dim() {
            let mut acc = 0.0;
            for j in 0..TOY_OUTPUTS {
                acc += eval.param_jacobian[p][j] * out_grad[j];
            }
            grad[LEARNABLE_COUNT + p] += acc;
        }
        losses.scaled_add(&part, 1.0);
        used += 1;
    }

    if used > 0 {
        let scale = 1.0 / used as f64;
        for v in &mut grad {
            *v *= scale;
        }
        losses = LossBreakdown {
            prediction: losses.prediction * scale,
            score: losses.score * scale,
            decision: 0.0,
            planning: 0.0,
            imitation: 0.0,
        };
        let before = state.params();
        let mut params = before.clone();
        state.adam.update(&mut params, &grad, config.learning_rate);
        state.apply_changed(&before, &params);
        state.step += 1;
    }

    Ok(StepReport {
        total: super::losses::pretrain_loss(&losses, loss_weights),
        losses,
        skipped,
    })
}

// -------------------------------------------------------------------------
// train-v1 checkpoints
// -------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct CheckpointDoc {
    schema: String,
    state: TrainState,
}

pub fn save_checkpoint(state: &TrainState, path: &Path) -> Result<(), TrainError> {
    let doc = CheckpointDoc {
        schema: "train-v1".into(),
        state: state.clone(),
    };
    let mut text =
        serde_json::to_string_pretty(&doc).map_err(|e| TrainError::Checkpoint(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| TrainError::Checkpoint(e.to_string()))
}

pub fn load_checkpoint(path: &Path) -> Result<TrainState, TrainError> {
    let text = std::fs::read_to_string(path).map_err(|e| TrainError::Checkpoint(e.to_string()))?;
    let doc: CheckpointDoc =
        serde_json::from_str(&text).map_err(|e| TrainError::Checkpoint(e.to_string()))?;
    if doc.schema != "train-v1" {
        return Err(TrainError::Checkpoint(format!(
            "unsupported schema `{}`",
            doc.schema
        )));
    }
    Ok(doc.state)
}

