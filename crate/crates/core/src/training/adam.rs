//! Adaptive-moment gradient update used by the outer loop.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdamState {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub step: u64,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

impl AdamState {
    pub fn new(dim: usize) -> Self {
        AdamState {
            first: vec![0.0; dim],
            second: vec![0.0; dim],
            step: 0,
        }
    }

    /// Applies one bias-corrected update in place.
    pub fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        assert_eq!(params.len(), grad.len());
        assert_eq!(params.len(), self.first.len());
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - BETA1.powf(t);
        let bc2 = 1.0 - BETA2.powf(t);
        for i in 0..params.len() {
            self.first[i] = BETA1 * self.first[i] + (1.0 - BETA1) * grad[i];
            self.second[i] = BETA2 * self.second[i] + (1.0 - BETA2) * grad[i] * grad[i];
            let m = self.first[i] / bc1;
            let v = self.second[i] / bc2;
            params[i] -= lr * m / (v.sqrt() + EPS);
        }
    }
}
