//! Discrete kinematic bicycle model with exact analytic step Jacobians.
//!
//! Single-shooting convention: the planner optimizes controls only, and
//! states are produced by [`rollout`], so the dynamics hold by construction.

use crate::scalar::Real;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct VehicleParams {
    /// Wheelbase, m.
    pub wheelbase: f64,
    /// Body length, m (used by gap and collision terms).
    pub body_length: f64,
    /// Body width, m.
    pub body_width: f64,
    /// Timestep, s; must match the scenario.
    pub dt: f64,
    /// Acceleration bound, m/s^2; controls are clamped at rollout.
    pub accel_limit: f64,
    /// Steering bound, rad.
    pub steer_limit: f64,
}

impl VehicleParams {
    pub fn new(wheelbase: f64, body_length: f64, body_width: f64, dt: f64) -> Self {
        VehicleParams {
            wheelbase,
            body_length,
            body_width,
            dt,
            accel_limit: 5.0,
            steer_limit: 0.6,
        }
    }
}

/// Ego state: position of the body center, heading (stored unwrapped), speed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EgoState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
}

impl EgoState {
    pub fn new(x: f64, y: f64, heading: f64, speed: f64) -> Self {
        EgoState {
            x,
            y,
            heading,
            speed,
        }
    }
    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }
    pub fn to_array(&self) -> [f64; 4] {
        [self.x, self.y, self.heading, self.speed]
    }
    pub fn from_array(a: [f64; 4]) -> Self {
        EgoState::new(a[0], a[1], a[2], a[3])
    }
}

/// Acceleration and steering angle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub accel: f64,
    pub steer: f64,
}

impl ControlInput {
    pub fn new(accel: f64, steer: f64) -> Self {
        ControlInput { accel, steer }
    }
}

/// A dynamically feasible trajectory: `states[k+1] = step(states[k], controls[k])`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<EgoState>,
    pub controls: Vec<ControlInput>,
}

/// One step of the discrete bicycle model, generic over the scalar type.
/// Controls are clamped to the bounds with projection semantics (zero
/// tangent outside).
pub fn step_generic<S: Real>(x: [S; 4], u: [S; 2], p: &VehicleParams) -> [S; 4] {
    let a = u[0].clamp_value(-p.accel_limit, p.accel_limit);
    let steer = u[1].clamp_value(-p.steer_limit, p.steer_limit);
    let dt = p.dt;
    [
        x[0] + x[3] * x[2].cos().scale(dt),
        x[1] + x[3] * x[2].sin().scale(dt),
        x[2] + x[3].scale(dt / p.wheelbase) * steer.tan(),
        x[3] + a.scale(dt),
    ]
}

/// One step of the discrete bicycle model.
pub fn step(x: &EgoState, u: &ControlInput, p: &VehicleParams) -> EgoState {
    EgoState::from_array(step_generic(x.to_array(), [u.accel, u.steer], p))
}

/// Rolls controls out from an initial state. Deterministic; the returned
/// trajectory satisfies the step recurrence exactly.
pub fn rollout(x0: &EgoState, controls: &[ControlInput], p: &VehicleParams) -> Trajectory {
    let mut states = Vec::with_capacity(controls.len() + 1);
    states.push(*x0);
    for u in controls {
        let next = step(states.last().unwrap(), u, p);
        states.push(next);
    }
    Trajectory {
        states,
        controls: controls.to_vec(),
    }
}

/// Analytic partial derivatives of the step map, generic over the scalar:
/// (d next/d state, d next/d control). At or beyond a control bound the
/// corresponding control column is zero.
pub fn step_jacobians_generic<S: Real>(
    x: &[S; 4],
    u: &[S; 2],
    p: &VehicleParams,
) -> ([[S; 4]; 4], [[S; 2]; 4]) {
    let zero = S::constant(0.0);
    let one = S::constant(1.0);
    let dt = p.dt;
    let sin_h = x[2].sin();
    let cos_h = x[2].cos();
    let a_free = u[0].value().abs() < p.accel_limit;
    let steer_c = u[1].clamp_value(-p.steer_limit, p.steer_limit);
    let steer_free = u[1].value().abs() < p.steer_limit;
    let cos_s = steer_c.cos();

    let a = [
        [one, zero, -(x[3] * sin_h).scale(dt), cos_h.scale(dt)],
        [zero, one, (x[3] * cos_h).scale(dt), sin_h.scale(dt)],
        [zero, zero, one, steer_c.tan().scale(dt / p.wheelbase)],
        [zero, zero, zero, one],
    ];
    let b = [
        [zero, zero],
        [zero, zero],
        [
            zero,
            if steer_free {
                x[3].scale(dt / p.wheelbase) / (cos_s * cos_s)
            } else {
                zero
            },
        ],
        [if a_free { S::constant(dt) } else { zero }, zero],
    ];
    (a, b)
}

/// `f64` convenience wrapper around [`step_jacobians_generic`].
pub fn step_jacobians(
    x: &EgoState,
    u: &ControlInput,
    p: &VehicleParams,
) -> ([[f64; 4]; 4], [[f64; 2]; 4]) {
    step_jacobians_generic(&x.to_array(), &[u.accel, u.steer], p)
}
