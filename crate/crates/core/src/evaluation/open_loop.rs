//! Open-loop evaluation: one solve per scenario, compared against the
//! recorded ground truth without executing the plan.

use super::closed_loop::off_drivable;
use super::collision::{collision_check, Footprint};
use crate::initializer::Initializer;
use crate::planner::plan;
use crate::residuals::CostWeights;
use crate::solver::SolverConfig;
use crate::world::Scenario;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OpenLoopRecord {
    pub scenario: String,
    pub solved: bool,
    pub converged: bool,
    /// Position error at 1 s / 3 s / 5 s (plan steps 10/30/50), when the
    /// horizon reaches that far.
    pub error_1s: Option<f64>,
    pub error_3s: Option<f64>,
    pub error_5s: Option<f64>,
    pub collision: bool,
    pub off_route: bool,
    pub avg_accel: f64,
    pub avg_lat_accel: f64,
}

/// Aggregate over a suite; error means skip unsolved scenarios.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct OpenLoopSummary {
    pub scenarios: usize,
    pub solved: usize,
    pub collision_rate: f64,
    pub off_route_rate: f64,
    pub mean_error_1s: f64,
    pub mean_error_3s: f64,
    pub mean_error_5s: f64,
    pub mean_accel: f64,
    pub mean_lat_accel: f64,
}

pub fn open_loop_eval(
    scenario: &Scenario,
    initializer: &dyn Initializer,
    weights: &CostWeights,
    config: &SolverConfig,
) -> OpenLoopRecord {
    let start_step = scenario.current_step();
    let outcome = match plan(
        scenario,
        &scenario.ego.start,
        start_step,
        initializer,
        weights,
        config,
    ) {
        Ok(o) => o,
        Err(_) => {
            return OpenLoopRecord {
                scenario: scenario.name.clone(),
                solved: false,
                converged: false,
                error_1s: None,
                error_3s: None,
                error_5s: None,
                collision: false,
                off_route: false,
                avg_accel: 0.0,
                avg_lat_accel: 0.0,
            }
        }
    };
    let traj = &outcome.result.trajectory;
    let gt = &scenario.ego.ground_truth;
    let error_at = |step: usize| -> Option<f64> {
        if step < traj.states.len() && step < gt.len() {
            let p = traj.states[step];
            let g = gt[step];
            Some(((p.x - g.x).powi(2) + (p.y - g.y).powi(2)).sqrt())
        } else {
            None
        }
    };

    // collision of the planned trajectory against the replayed agents
    let mut collision = false;
    let mut off_route = false;
    for (k, state) in traj.states.iter().enumerate().skip(1) {
        let ego_fp = Footprint::new(
            state.x,
            state.y,
            state.heading,
            scenario.ego.length,
            scenario.ego.width,
        );
        for agent in &scenario.agents {
            let p = agent.pose_at(start_step + k);
            if collision_check(
                &ego_fp,
                &Footprint::new(p.x, p.y, p.heading, agent.length, agent.width),
            ) {
                collision = true;
            }
        }
        if off_drivable(scenario, state.position()) {
            off_route = true;
        }
    }

    let vehicle = crate::planner::vehicle_params(scenario);
    let n = traj.controls.len().max(1) as f64;
    let avg_accel = traj.controls.iter().map(|u| u.accel.abs()).sum::<f64>() / n;
    let avg_lat_accel = traj
        .controls
        .iter()
        .zip(traj.states.iter())
        .map(|(u, s)| {
            let steer = u.steer.clamp(-vehicle.steer_limit, vehicle.steer_limit);
            (s.speed * s.speed * steer.tan() / vehicle.wheelbase).abs()
        })
        .sum::<f64>()
        / n;

    OpenLoopRecord {
        scenario: scenario.name.clone(),
        solved: true,
        converged: outcome.result.converged,
        error_1s: error_at(10),
        error_3s: error_at(30),
        error_5s: error_at(50),
        collision,
        off_route,
        avg_accel,
        avg_lat_accel,
    }
}

pub fn summarize_open_loop(records: &[OpenLoopRecord]) -> OpenLoopSummary {
    let solved: Vec<&OpenLoopRecord> = records.iter().filter(|r| r.solved).collect();
    let mean = |f: &dyn Fn(&OpenLoopRecord) -> Option<f64>| -> f64 {
        let vals: Vec<f64> = solved.iter().filter_map(|r| f(r)).collect();
        if vals.is_empty() {
            0.0
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    };
    OpenLoopSummary {
        scenarios: records.len(),
        solved: solved.len(),
        collision_rate: 100.0 * solved.iter().filter(|r| r.collision).count() as f64
            / solved.len().max(1) as f64,
        off_route_rate: 100.0 * solved.iter().filter(|r| r.off_route).count() as f64
            / solved.len().max(1) as f64,
        mean_error_1s: mean(&|r| r.error_1s),
        mean_error_3s: mean(&|r| r.error_3s),
        mean_error_5s: mean(&|r| r.error_5s),
        mean_accel: mean(&|r| Some(r.avg_accel)),
        mean_lat_accel: mean(&|r| Some(r.avg_lat_accel)),
    }
}
