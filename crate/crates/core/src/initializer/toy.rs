//! Toy learnable initializer: a single affine map over tanh-squashed scene
//! features producing decision logits and control-offset coefficients. It
//! exercises the same gradient path a full prediction network would, at a
//! size where exact Jacobians are trivial.

use super::heuristic::heuristic_candidates;
use super::{
    availability, constant_velocity_predict, Future, InitContext, Initializer, InitializerError,
    InitializerOutput,
};
use crate::residuals::maneuver_slot;
use crate::vehicle::{rollout, ControlInput, EgoState};
use crate::world::{identify_lead, identify_rear, target_lane, Scenario};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Fixed scene-feature layout (all entries tanh-squashed after scaling):
/// ego speed; lead gap per maneuver; lead speed per maneuver; rear gap for
/// left/right; rear speed for left/right; speed limit per maneuver.
pub const FEATURE_COUNT: usize = 14;

/// Outputs: three decision logits, then accel bias, accel ramp, steer bias,
/// steer ramp coefficients for the control offsets.
pub const TOY_OUTPUTS: usize = 7;

/// Fixed output scaling so training at small learning rates moves the
/// decision distribution meaningfully within a few dozen steps.
const OUTPUT_SCALE: [f64; TOY_OUTPUTS] = [25.0, 25.0, 25.0, 1.0, 1.0, 0.1, 0.1];

const GAP_SENTINEL: f64 = 100.0;

/// Flat parameter vector: row-major weight matrix then biases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyParams {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ToyParams {
    pub fn zeros() -> Self {
        ToyParams {
            weights: vec![0.0; TOY_OUTPUTS * FEATURE_COUNT],
            bias: vec![0.0; TOY_OUTPUTS],
        }
    }

    pub fn dim() -> usize {
        TOY_OUTPUTS * FEATURE_COUNT + TOY_OUTPUTS
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = self.weights.clone();
        out.extend_from_slice(&self.bias);
        out
    }

    pub fn from_flat(flat: &[f64]) -> Self {
        assert_eq!(flat.len(), Self::dim());
        ToyParams {
            weights: flat[..TOY_OUTPUTS * FEATURE_COUNT].to_vec(),
            bias: flat[TOY_OUTPUTS * FEATURE_COUNT..].to_vec(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.weights.len() != TOY_OUTPUTS * FEATURE_COUNT || self.bias.len() != TOY_OUTPUTS {
            return Err(format!(
                "expected {}x{} weights and {} biases",
                TOY_OUTPUTS,
                FEATURE_COUNT,
                TOY_OUTPUTS
            ));
        }
        if self.flat().iter().any(|v| !v.is_finite()) {
            return Err("parameters must be finite".into());
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        #[derive(Deserialize)]
        struct Doc {
            schema: String,
            params: ToyParams,
        }
        let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
        let doc: Doc = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        if doc.schema != "toy-v1" {
            return Err(format!("unsupported schema `{}`", doc.schema));
        }
        doc.params.validate()?;
        Ok(doc.params)
    }

    pub fn save(&self, path: &Path) -> Result<(), String> {
        #[derive(Serialize)]
        struct Doc<'a> {
            schema: &'a str,
            params: &'a ToyParams,
        }
        let mut text = serde_json::to_string_pretty(&Doc {
            schema: "toy-v1",
            params: self,
        })
        .map_err(|e| e.to_string())?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| e.to_string())
    }
}

/// Builds the fixed 14-entry feature vector. Missing agents use the gap
/// sentinel and a neutral speed; masked maneuvers zero their entries.
pub fn scene_features(scenario: &Scenario, ego: &EgoState, start_step: usize) -> [f64; FEATURE_COUNT] {
    let (current, mask) = availability(scenario, ego);
    let mut lead_gap = [GAP_SENTINEL; 3];
    let mut lead_speed = [0.0; 3];
    let mut rear_gap = [GAP_SENTINEL; 2];
    let mut rear_speed = [0.0; 2];
    let mut limits = [0.0; 3];
    for m in [-1i8, 0, 1] {
        let slot = maneuver_slot(m);
        if !mask[slot] {
            continue;
        }
        let lane_id = target_lane(current, m, &scenario.lanes).unwrap();
        let lane = scenario.lane(lane_id).unwrap();
        limits[slot] = lane.speed_limit;
        lead_speed[slot] = lane.speed_limit; // neutral when absent
        if let Some(snap) = identify_lead(scenario, lane_id, ego, start_step) {
            lead_gap[slot] = snap.s_gap;
            lead_speed[slot] = snap.speed;
        }
        if m != 0 {
            let r = if m == -1 { 0 } else { 1 };
            if let Some(snap) = identify_rear(scenario, lane_id, ego, start_step) {
                rear_gap[r] = -snap.s_gap;
                rear_speed[r] = snap.speed;
            }
        }
    }
    [
        ego.speed / 10.0,
        lead_gap[0] / 50.0,
        lead_gap[1] / 50.0,
        lead_gap[2] / 50.0,
        lead_speed[0] / 10.0,
        lead_speed[1] / 10.0,
        lead_speed[2] / 10.0,
        rear_gap[0] / 50.0,
        rear_gap[1] / 50.0,
        rear_speed[0] / 10.0,
        rear_speed[1] / 10.0,
        limits[0] / 10.0,
        limits[1] / 10.0,
        limits[2] / 10.0,
    ]
}

/// Forward map plus the exact Jacobian of the outputs with respect to the
/// flat parameter vector (row-major weights, then biases).
pub fn toy_forward(
    params: &ToyParams,
    features: &[f64; FEATURE_COUNT],
) -> ([f64; TOY_OUTPUTS], Vec<[f64; TOY_OUTPUTS]>) {
    let z: Vec<f64> = features.iter().map(|f| f.tanh()).collect();
    let mut out = [0.0; TOY_OUTPUTS];
    for j in 0..TOY_OUTPUTS {
        let mut acc = params.bias[j];
        for (k, zk) in z.iter().enumerate() {
            acc += params.weights[j * FEATURE_COUNT + k] * zk;
        }
        out[j] = OUTPUT_SCALE[j] * acc;
    }
    // jacobian column per parameter
    let dim = ToyParams::dim();
    let mut jac = vec![[0.0; TOY_OUTPUTS]; dim];
    for j in 0..TOY_OUTPUTS {
        for (k, zk) in z.iter().enumerate() {
            jac[j * FEATURE_COUNT + k][j] = OUTPUT_SCALE[j] * zk;
        }
        jac[TOY_OUTPUTS * FEATURE_COUNT + j][j] = OUTPUT_SCALE[j];
    }
    (out, jac)
}

/// Softmax over the available decision slots.
pub fn masked_softmax(logits: [f64; 3], mask: [bool; 3]) -> [f64; 3] {
    let max = (0..3)
        .filter(|i| mask[*i])
        .map(|i| logits[i])
        .fold(f64::NEG_INFINITY, f64::max);
    let mut probs = [0.0; 3];
    let mut total = 0.0;
    for i in 0..3 {
        if mask[i] {
            probs[i] = (logits[i] - max).exp();
            total += probs[i];
        }
    }
    for p in &mut probs {
        *p /= total;
    }
    probs
}

/// Control offsets from the four ramp coefficients.
pub fn control_offsets(coeffs: [f64; 4], horizon: usize) -> Vec<[f64; 2]> {
    (0..horizon)
        .map(|k| {
            let phase = if horizon > 1 {
                k as f64 / (horizon - 1) as f64 - 0.5
            } else {
                0.0
            };
            [
                coeffs[0] + coeffs[1] * phase,
                coeffs[2] + coeffs[3] * phase,
            ]
        })
        .collect()
}

pub struct ToyInitializer {
    params: ToyParams,
}

impl ToyInitializer {
    pub fn new(params: ToyParams) -> Self {
        ToyInitializer { params }
    }

    pub fn params(&self) -> &ToyParams {
        &self.params
    }
}

/// Toy evaluation with the intermediates the training loop differentiates
/// through: the raw outputs, their parameter Jacobian, and the masked
/// decision distribution.
pub struct ToyEval {
    pub output: InitializerOutput,
    pub features: [f64; FEATURE_COUNT],
    pub raw: [f64; TOY_OUTPUTS],
    /// d raw / d flat-parameter, one row per parameter.
    pub param_jacobian: Vec<[f64; TOY_OUTPUTS]>,
    pub probs: [f64; 3],
}

pub fn toy_evaluate(params: &ToyParams, ctx: &InitContext) -> Result<ToyEval, InitializerError> {
    let (current, mask) = availability(ctx.scenario, ctx.ego);
    if !mask.iter().any(|m| *m) {
        return Err(InitializerError::NoManeuver(current));
    }
    let features = scene_features(ctx.scenario, ctx.ego, ctx.start_step);
    let (raw, param_jacobian) = toy_forward(params, &features);
    let probs = masked_softmax([raw[0], raw[1], raw[2]], mask);
    let offsets = control_offsets([raw[3], raw[4], raw[5], raw[6]], ctx.horizon);

    let predictions = constant_velocity_predict(ctx.scenario, ctx.start_step, ctx.horizon);
    let futures = heuristic_candidates(ctx, &mask)
        .into_iter()
        .map(|(m, base)| {
            let controls: Vec<ControlInput> = base
                .iter()
                .zip(&offsets)
                .map(|(u, d)| ControlInput::new(u.accel + d[0], u.steer + d[1]))
                .collect();
            Future {
                maneuver: m,
                ego_trajectory: rollout(ctx.ego, &controls, ctx.vehicle),
                ego_controls: controls,
                // scores follow the decision distribution so the score loss
                // trains through the same logits
                score: probs[maneuver_slot(m)],
                decision_probs: probs,
            }
        })
        .collect();
    Ok(ToyEval {
        output: InitializerOutput {
            futures,
            predictions,
            mask,
        },
        features,
        raw,
        param_jacobian,
        probs,
    })
}

impl Initializer for ToyInitializer {
    fn name(&self) -> String {
        "toy".into()
    }

    fn initialize(&self, ctx: &InitContext) -> Result<InitializerOutput, InitializerError> {
        toy_evaluate(&self.params, ctx).map(|e| e.output)
    }
}
