//! Cost weights, split into a learnable set (adjusted by training) and a
//! fixed set that enforces hard constraints and never changes.

use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Number of learnable weights.
pub const LEARNABLE_COUNT: usize = 9;

/// Names of the learnable weights, in the canonical order used by weight
/// vectors and sensitivity columns.
pub const LEARNABLE_NAMES: [&str; LEARNABLE_COUNT] = [
    "track_x",
    "track_y",
    "lead_speed",
    "lead_gap",
    "rear_speed",
    "rear_gap",
    "efficiency",
    "comfort_accel",
    "comfort_steer",
];

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid weights: {0}")]
    Invalid(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// All cost weights plus the numeric constants of the gap and collision terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    // learnable
    pub track_x: f64,
    pub track_y: f64,
    pub lead_speed: f64,
    pub lead_gap: f64,
    pub rear_speed: f64,
    pub rear_gap: f64,
    pub efficiency: f64,
    pub comfort_accel: f64,
    pub comfort_steer: f64,
    // fixed (hard constraints)
    pub collision: f64,
    pub traffic: f64,
    pub decision_binary: f64,
    pub decision_sum: f64,
    // constants
    /// Denominator constant of the gap terms, m.
    pub gap_epsilon: f64,
    /// Extra margin added to the two body lengths in the collision threshold, m.
    pub collision_margin: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights {
            track_x: 0.05,
            track_y: 0.5,
            lead_speed: 0.3,
            lead_gap: 10.0,
            rear_speed: 0.2,
            rear_gap: 5.0,
            efficiency: 0.1,
            comfort_accel: 0.5,
            comfort_steer: 5.0,
            collision: 100.0,
            traffic: 100.0,
            decision_binary: 10.0,
            decision_sum: 1000.0,
            gap_epsilon: 0.5,
            collision_margin: 2.0,
        }
    }
}

impl CostWeights {
    pub fn learnable(&self) -> [f64; LEARNABLE_COUNT] {
        [
            self.track_x,
            self.track_y,
            self.lead_speed,
            self.lead_gap,
            self.rear_speed,
            self.rear_gap,
            self.efficiency,
            self.comfort_accel,
            self.comfort_steer,
        ]
    }

    pub fn set_learnable(&mut self, values: &[f64; LEARNABLE_COUNT]) {
        self.track_x = values[0];
        self.track_y = values[1];
        self.lead_speed = values[2];
        self.lead_gap = values[3];
        self.rear_speed = values[4];
        self.rear_gap = values[5];
        self.efficiency = values[6];
        self.comfort_accel = values[7];
        self.comfort_steer = values[8];
    }

    pub fn fixed(&self) -> [f64; 4] {
        [
            self.collision,
            self.traffic,
            self.decision_binary,
            self.decision_sum,
        ]
    }

    pub fn validate(&self) -> Result<(), WeightsError> {
        let all = [
            self.learnable().as_slice(),
            self.fixed().as_slice(),
            &[self.gap_epsilon, self.collision_margin],
        ]
        .concat();
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(WeightsError::Invalid(
                "weights must be finite and non-negative".into(),
            ));
        }
        if self.gap_epsilon == 0.0 {
            return Err(WeightsError::Invalid("gap_epsilon must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct WeightsDoc {
    schema: String,
    weights: CostWeights,
    learnable: Vec<String>,
    fixed: Vec<String>,
}

/// Serializes to the flat `weights-v1` document, with explicit
/// learnable/fixed partition flags.
pub fn save_weights_string(w: &CostWeights) -> String {
    let doc = WeightsDoc {
        schema: "weights-v1".into(),
        weights: *w,
        learnable: LEARNABLE_NAMES.iter().map(|s| s.to_string()).collect(),
        fixed: ["collision", "traffic", "decision_binary", "decision_sum"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("weights serialize");
    text.push('\n');
    text
}

pub fn save_weights(w: &CostWeights, path: &Path) -> Result<(), WeightsError> {
    std::fs::write(path, save_weights_string(w))?;
    Ok(())
}

pub fn load_weights_str(text: &str) -> Result<CostWeights, WeightsError> {
    let doc: WeightsDoc =
        serde_json::from_str(text).map_err(|e| WeightsError::Parse(e.to_string()))?;
    if doc.schema != "weights-v1" {
        return Err(WeightsError::Parse(format!(
            "unsupported schema `{}` (expected weights-v1)",
            doc.schema
        )));
    }
    doc.weights.validate()?;
    Ok(doc.weights)
}

pub fn load_weights(path: &Path) -> Result<CostWeights, WeightsError> {
    let text = std::fs::read_to_string(path)?;
    load_weights_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_pin_hard_constraint_weights() {
        let w = CostWeights::default();
        assert_eq!(w.decision_binary, 10.0);
        assert_eq!(w.decision_sum, 1000.0);
    }

    #[test]
    fn weights_round_trip() {
        let mut w = CostWeights::default();
        w.track_x = 0.123456789;
        let text = save_weights_string(&w);
        assert_eq!(load_weights_str(&text).unwrap(), w);
    }

    #[test]
    fn negative_weight_rejected() {
        let mut w = CostWeights::default();
        w.efficiency = -1.0;
        assert!(w.validate().is_err());
    }
}
