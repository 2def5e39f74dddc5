//! Heuristic initializer: proportional path tracking toward each candidate
//! lane at its speed limit, with decision probabilities from the coarse
//! residual cost of each candidate rollout.

use super::{
    availability, constant_velocity_predict, Future, InitContext, Initializer, InitializerError,
    InitializerOutput,
};
use crate::residuals::{
    build_context, compute_gates, lift_weights, linearize, maneuver_slot,
    PlanVars, MANEUVERS,
};
use crate::scalar::wrap_angle;
use crate::vehicle::{rollout, step, ControlInput, EgoState, VehicleParams};
use crate::world::{project_to_frenet, Lane};

const SPEED_GAIN: f64 = 0.7;
const MIN_LOOKAHEAD: f64 = 4.0;
const LOOKAHEAD_TIME: f64 = 0.8;

/// Pure-pursuit style control sequence tracking a lane's centerline at its
/// speed limit.
pub fn candidate_controls(
    lane: &Lane,
    ego: &EgoState,
    vehicle: &VehicleParams,
    horizon: usize,
) -> Vec<ControlInput> {
    let mut x = *ego;
    let mut out = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let proj = project_to_frenet(x.position(), lane);
        let lookahead = (LOOKAHEAD_TIME * x.speed).max(MIN_LOOKAHEAD);
        let target = lane.centerline.point_at(proj.s + lookahead);
        let desired = (target[1] - x.y).atan2(target[0] - x.x);
        let err = wrap_angle(desired - x.heading);
        let steer = (2.0 * vehicle.wheelbase * err.sin() / lookahead)
            .atan()
            .clamp(-vehicle.steer_limit, vehicle.steer_limit);
        let accel = (SPEED_GAIN * (lane.speed_limit - x.speed))
            .clamp(-vehicle.accel_limit, vehicle.accel_limit);
        let u = ControlInput::new(accel, steer);
        x = step(&x, &u, vehicle);
        out.push(u);
    }
    out
}

/// Coarse cost of a candidate: the assembled squared residual of its rollout
/// under a one-hot decision.
fn coarse_cost(
    ctx: &crate::residuals::PlanContext<f64>,
    start: &EgoState,
    controls: &[ControlInput],
    maneuver: i8,
    weights: &crate::residuals::CostWeights,
    vehicle: &VehicleParams,
) -> f64 {
    let t = ctx.horizon;
    let mut one_hot = [0.0; 3];
    one_hot[maneuver_slot(maneuver)] = 1.0;
    let decisions = vec![one_hot; t];
    let raw: Vec<[f64; 2]> = controls.iter().map(|u| [u.accel, u.steer]).collect();
    let traj = rollout(start, controls, vehicle);
    let states: Vec<[f64; 4]> = traj.states.iter().map(|s| s.to_array()).collect();
    let gates = compute_gates(&states, &decisions, ctx);
    let vars = PlanVars::<f64> {
        controls: raw,
        decisions,
    };
    let lw = lift_weights(weights);
    linearize(start.to_array(), &vars, ctx, &lw, &gates, vehicle).cost
}

/// Softmax of negative coarse costs with a spread-relative temperature, so
/// equal costs give a uniform distribution regardless of magnitude.
fn cost_softmax(costs: &[(usize, f64)]) -> [f64; 3] {
    let min = costs.iter().map(|(_, c)| *c).fold(f64::INFINITY, f64::min);
    let mean = costs.iter().map(|(_, c)| *c).sum::<f64>() / costs.len() as f64;
    let temp = (mean - min).max(1e-6);
    let mut probs = [0.0; 3];
    let mut total = 0.0;
    for (slot, c) in costs {
        let e = (-(c - min) / temp).exp();
        probs[*slot] = e;
        total += e;
    }
    for p in &mut probs {
        *p /= total;
    }
    probs
}

pub struct HeuristicInitializer;

impl Initializer for HeuristicInitializer {
    fn name(&self) -> String {
        "heuristic".into()
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
        let plan_ctx = build_context(
            ctx.scenario,
            &predictions,
            ctx.ego,
            ctx.start_step,
            ctx.horizon,
            ctx.weights.collision_margin,
        );

        let mut candidates = Vec::with_capacity(available.len());
        for m in &available {
            let lane_id = plan_ctx.target_lanes[maneuver_slot(*m)].unwrap();
            let lane = ctx.scenario.lane(lane_id).unwrap();
            let controls = candidate_controls(lane, ctx.ego, ctx.vehicle, ctx.horizon);
            let cost = coarse_cost(&plan_ctx, ctx.ego, &controls, *m, ctx.weights, ctx.vehicle);
            candidates.push((*m, controls, cost));
        }

        let probs = cost_softmax(
            &candidates
                .iter()
                .map(|(m, _, c)| (maneuver_slot(*m), *c))
                .collect::<Vec<_>>(),
        );

        let uniform = 1.0 / candidates.len() as f64;
        let futures = candidates
            .into_iter()
            .map(|(m, controls, _)| Future {
                maneuver: m,
                ego_trajectory: rollout(ctx.ego, &controls, ctx.vehicle),
                ego_controls: controls,
                score: uniform,
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

/// Shared by the toy strategy: heuristic controls for every available
/// maneuver, in maneuver order.
pub fn heuristic_candidates(
    ctx: &InitContext,
    mask: &[bool; 3],
) -> Vec<(i8, Vec<ControlInput>)> {
    let current = crate::world::nearest_lane(ctx.ego.position(), &ctx.scenario.lanes);
    MANEUVERS
        .into_iter()
        .filter(|m| mask[maneuver_slot(*m)])
        .map(|m| {
            let lane_id = crate::world::target_lane(current, m, &ctx.scenario.lanes).unwrap();
            let lane = ctx.scenario.lane(lane_id).unwrap();
            (m, candidate_controls(lane, ctx.ego, ctx.vehicle, ctx.horizon))
        })
        .collect()
}
