//! Per-solve context: everything the residual blocks read besides the plan
//! variables. Built once per solve from world queries at the start step
//! against the predicted agent futures, then immutable.

use crate::scalar::Dual;
use crate::vehicle::EgoState;
use crate::world::{
    identify_lead, identify_rear, nearest_lane, project_to_frenet, target_lane, AgentPose,
    Polyline, Scenario, SignalState,
};

/// Interactive-agent selection window along each candidate lane, m.
pub const INTERACTIVE_BEHIND: f64 = 10.0;
pub const INTERACTIVE_AHEAD: f64 = 60.0;

/// Slot index for a maneuver in fixed-size per-maneuver arrays.
#[inline]
pub fn maneuver_slot(m: i8) -> usize {
    (m + 1) as usize
}

pub const MANEUVERS: [i8; 3] = [-1, 0, 1];

/// Predicted future poses for one agent, covering plan steps `1..=horizon`.
#[derive(Clone, Debug)]
pub struct PredictedTrack {
    pub agent_index: usize,
    pub poses: Vec<AgentPose>,
}

/// Joint prediction for every agent in the scene.
#[derive(Clone, Debug, Default)]
pub struct AgentPredictions {
    pub tracks: Vec<PredictedTrack>,
}

impl AgentPredictions {
    pub fn for_agent(&self, agent_index: usize) -> Option<&PredictedTrack> {
        self.tracks.iter().find(|t| t.agent_index == agent_index)
    }
}

/// Per-step positions and speeds of one agent playing a lead/rear role.
#[derive(Clone, Debug)]
pub struct AgentChannel<S> {
    pub agent_index: usize,
    /// Position per plan step `0..horizon` (step 0 is the recorded pose).
    pub positions: Vec<[S; 2]>,
    /// Speed per plan step (not differentiated).
    pub speeds: Vec<f64>,
}

/// Agent participating in the collision term.
#[derive(Clone, Debug)]
pub struct InteractiveAgent<S> {
    pub agent_index: usize,
    pub positions: Vec<[S; 2]>,
    /// Hinge threshold: both body lengths plus the safety margin.
    pub threshold: f64,
}

/// Red-light data on the current lane.
#[derive(Clone, Debug)]
pub struct SignalChannel {
    pub stop_line_s: f64,
    /// Red flag per plan step.
    pub red: Vec<bool>,
}

/// Immutable solve context, generic over the scalar so agent positions can
/// carry tangents in sensitivity passes.
#[derive(Clone, Debug)]
pub struct PlanContext<S> {
    pub horizon: usize,
    pub dt: f64,
    pub current_lane: u32,
    /// Maneuver availability; slot order left / keep / right.
    pub mask: [bool; 3],
    pub target_lanes: [Option<u32>; 3],
    /// Reference centerline point per plan step for each available maneuver.
    pub references: [Vec<[f64; 2]>; 3],
    pub speed_limits: [f64; 3],
    pub lead: [Option<AgentChannel<S>>; 3],
    pub rear: [Option<AgentChannel<S>>; 3],
    pub interactive: Vec<InteractiveAgent<S>>,
    pub signal: Option<SignalChannel>,
    /// Current-lane centerline, used for stop-line arc projection.
    pub lane_line: Polyline,
    pub ego_body_length: f64,
}

impl<S> PlanContext<S> {
    pub fn available(&self) -> impl Iterator<Item = i8> + '_ {
        MANEUVERS
            .into_iter()
            .filter(|m| self.mask[maneuver_slot(*m)])
    }
}

fn channel_from(
    scenario: &Scenario,
    predictions: &AgentPredictions,
    agent_index: usize,
    start_step: usize,
    horizon: usize,
) -> AgentChannel<f64> {
    let pose0 = scenario.agents[agent_index].pose_at(start_step);
    let predicted = predictions.for_agent(agent_index);
    let mut positions = Vec::with_capacity(horizon);
    let mut speeds = Vec::with_capacity(horizon);
    positions.push([pose0.x, pose0.y]);
    speeds.push(pose0.speed);
    for k in 1..horizon {
        let pose = predicted
            .and_then(|t| t.poses.get(k - 1).copied())
            .unwrap_or(pose0);
        positions.push([pose.x, pose.y]);
        speeds.push(pose.speed);
    }
    AgentChannel {
        agent_index,
        positions,
        speeds,
    }
}

/// Builds the context at `start_step` for the given current ego state.
///
/// The current lane is re-located by nearest-lane lookup so closed-loop
/// replanning follows the ego across lane changes. `collision_margin` is the
/// safety gap added to both body lengths in the collision threshold.
pub fn build_context(
    scenario: &Scenario,
    predictions: &AgentPredictions,
    ego: &EgoState,
    start_step: usize,
    horizon: usize,
    collision_margin: f64,
) -> PlanContext<f64> {
    let dt = scenario.meta.dt;
    let current_lane = nearest_lane(ego.position(), &scenario.lanes);
    let mut mask = [false; 3];
    let mut target_lanes = [None; 3];
    let mut references: [Vec<[f64; 2]>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut speed_limits = [0.0; 3];
    let mut lead: [Option<AgentChannel<f64>>; 3] = [None, None, None];
    let mut rear: [Option<AgentChannel<f64>>; 3] = [None, None, None];

    for m in MANEUVERS {
        let slot = maneuver_slot(m);
        let Some(lane_id) = target_lane(current_lane, m, &scenario.lanes) else {
            continue;
        };
        let lane = scenario.lane(lane_id).expect("validated lane id");
        mask[slot] = true;
        target_lanes[slot] = Some(lane_id);
        speed_limits[slot] = lane.speed_limit;

        // Reference advances along the target lane at its speed limit from
        // the ego's projected start arc.
        let s0 = project_to_frenet(ego.position(), lane).s;
        references[slot] = (0..horizon)
            .map(|k| lane.centerline.point_at(s0 + lane.speed_limit * dt * k as f64))
            .collect();

        lead[slot] = identify_lead(scenario, lane_id, ego, start_step)
            .map(|snap| channel_from(scenario, predictions, snap.agent_index, start_step, horizon));
        if m != 0 {
            rear[slot] = identify_rear(scenario, lane_id, ego, start_step).map(|snap| {
                channel_from(scenario, predictions, snap.agent_index, start_step, horizon)
            });
        }
    }

    // Interactive set for the collision term: any agent inside the corridor
    // window of at least one available target lane.
    let mut interactive = Vec::new();
    for (idx, agent) in scenario.agents.iter().enumerate() {
        let pose = agent.pose_at(start_step);
        let mut selected = false;
        for m in MANEUVERS {
            let slot = maneuver_slot(m);
            if !mask[slot] {
                continue;
            }
            let lane = scenario.lane(target_lanes[slot].unwrap()).unwrap();
            let agent_f = project_to_frenet([pose.x, pose.y], lane);
            let ego_s = project_to_frenet(ego.position(), lane).s;
            let gap = agent_f.s - ego_s;
            if gap >= -INTERACTIVE_BEHIND
                && gap <= INTERACTIVE_AHEAD
                && agent_f.d.abs() < 2.0 * lane.width
            {
                selected = true;
                break;
            }
        }
        if selected {
            let channel = channel_from(scenario, predictions, idx, start_step, horizon);
            interactive.push(InteractiveAgent {
                agent_index: idx,
                positions: channel.positions,
                threshold: scenario.ego.length + agent.length + collision_margin,
            });
        }
    }

    let lane_line = scenario.lane(current_lane).unwrap().centerline.clone();
    let signal = scenario
        .signals
        .iter()
        .find(|s| s.lane_id == current_lane)
        .map(|s| SignalChannel {
            stop_line_s: s.stop_line_s,
            red: (0..horizon)
                .map(|k| s.state_at(start_step + k) == SignalState::Red)
                .collect(),
        });

    PlanContext {
        horizon,
        dt,
        current_lane,
        mask,
        target_lanes,
        references,
        speed_limits,
        lead,
        rear,
        interactive,
        signal,
        lane_line,
        ego_body_length: scenario.ego.length,
    }
}

/// Tangent field over predicted agent positions, keyed by agent index.
/// Entry `k` of a track perturbs plan step `k + 1` (step 0 is recorded, not
/// predicted).
#[derive(Clone, Debug, Default)]
pub struct AgentPositionTangent {
    pub per_agent: Vec<(usize, Vec<[f64; 2]>)>,
}

impl AgentPositionTangent {
    fn tangent_for(&self, agent_index: usize, plan_step: usize) -> [f64; 2] {
        if plan_step == 0 {
            return [0.0, 0.0];
        }
        self.per_agent
            .iter()
            .find(|(idx, _)| *idx == agent_index)
            .and_then(|(_, t)| t.get(plan_step - 1).copied())
            .unwrap_or([0.0, 0.0])
    }
}

fn lift_channel(ch: &AgentChannel<f64>, seed: Option<&AgentPositionTangent>) -> AgentChannel<Dual> {
    AgentChannel {
        agent_index: ch.agent_index,
        positions: ch
            .positions
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let t = seed
                    .map(|s| s.tangent_for(ch.agent_index, k))
                    .unwrap_or([0.0, 0.0]);
                [Dual::new(p[0], t[0]), Dual::new(p[1], t[1])]
            })
            .collect(),
        speeds: ch.speeds.clone(),
    }
}

/// Lifts a context to dual scalars, seeding tangents on predicted agent
/// positions. Everything else is constant.
pub fn lift_context(
    ctx: &PlanContext<f64>,
    seed: Option<&AgentPositionTangent>,
) -> PlanContext<Dual> {
    PlanContext {
        horizon: ctx.horizon,
        dt: ctx.dt,
        current_lane: ctx.current_lane,
        mask: ctx.mask,
        target_lanes: ctx.target_lanes,
        references: ctx.references.clone(),
        speed_limits: ctx.speed_limits,
        lead: [
            ctx.lead[0].as_ref().map(|c| lift_channel(c, seed)),
            ctx.lead[1].as_ref().map(|c| lift_channel(c, seed)),
            ctx.lead[2].as_ref().map(|c| lift_channel(c, seed)),
        ],
        rear: [
            ctx.rear[0].as_ref().map(|c| lift_channel(c, seed)),
            ctx.rear[1].as_ref().map(|c| lift_channel(c, seed)),
            ctx.rear[2].as_ref().map(|c| lift_channel(c, seed)),
        ],
        interactive: ctx
            .interactive
            .iter()
            .map(|a| InteractiveAgent {
                agent_index: a.agent_index,
                positions: a
                    .positions
                    .iter()
                    .enumerate()
                    .map(|(k, p)| {
                        let t = seed
                            .map(|s| s.tangent_for(a.agent_index, k))
                            .unwrap_or([0.0, 0.0]);
                        [Dual::new(p[0], t[0]), Dual::new(p[1], t[1])]
                    })
                    .collect(),
                threshold: a.threshold,
            })
            .collect(),
        signal: ctx.signal.clone(),
        lane_line: ctx.lane_line.clone(),
        ego_body_length: ctx.ego_body_length,
    }
}

