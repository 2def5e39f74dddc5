//! Scenario data model: lanes, agent tracks, traffic signals, plus the lane
//! queries the planner relies on (lane-frame projection, nearest lane, lead
//! and rear-neighbor vehicle lookup).

pub mod geometry;
mod scenario_io;

pub use geometry::{Polyline, Projection};
pub use scenario_io::{load_scenario, load_scenario_str, save_scenario, save_scenario_string};

use crate::vehicle::EgoState;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Look-ahead / look-behind window for lead and rear vehicle queries, meters.
pub const AGENT_SEARCH_WINDOW: f64 = 100.0;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("semantic error in `{field}`: {msg}")]
    Semantic { field: String, msg: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Vehicle,
    Pedestrian,
    Cyclist,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalState {
    Red,
    Green,
}

/// A lane with an arc-length parameterized centerline.
#[derive(Clone, Debug)]
pub struct Lane {
    pub id: u32,
    pub centerline: Polyline,
    pub width: f64,
    pub speed_limit: f64,
    pub left_neighbor: Option<u32>,
    pub right_neighbor: Option<u32>,
}

/// Recorded pose of an agent at one timestep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentPose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
}

/// An agent with uniformly sampled recorded poses (history plus replay
/// future).
#[derive(Clone, Debug)]
pub struct AgentTrack {
    pub id: u64,
    pub kind: AgentKind,
    pub length: f64,
    pub width: f64,
    pub poses: Vec<AgentPose>,
}

impl AgentTrack {
    /// Pose at a recorded step, holding the last pose past the end.
    pub fn pose_at(&self, step: usize) -> AgentPose {
        self.poses[step.min(self.poses.len() - 1)]
    }
}

#[derive(Clone, Debug)]
pub struct TrafficSignal {
    pub lane_id: u32,
    pub stop_line_s: f64,
    /// One state per recorded step; the last state holds past the end.
    pub states: Vec<SignalState>,
}

impl TrafficSignal {
    pub fn state_at(&self, step: usize) -> SignalState {
        self.states[step.min(self.states.len() - 1)]
    }
}

/// Ego description bundled with the scenario.
#[derive(Clone, Debug)]
pub struct EgoSpec {
    pub lane_id: u32,
    pub length: f64,
    pub width: f64,
    pub wheelbase: f64,
    pub start: EgoState,
    /// Ground-truth trajectory; index 0 is the start state, then one state
    /// per future step.
    pub ground_truth: Vec<EgoState>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ScenarioMeta {
    pub dt: f64,
    pub history_steps: usize,
    pub horizon_steps: usize,
}

/// Immutable scenario: safe to share read-only across concurrent solves.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub meta: ScenarioMeta,
    pub lanes: Vec<Lane>,
    pub agents: Vec<AgentTrack>,
    pub signals: Vec<TrafficSignal>,
    pub ego: EgoSpec,
}

/// Lane-frame coordinates of a point relative to one lane.
#[derive(Clone, Copy, Debug)]
pub struct FrenetPose {
    pub s: f64,
    pub d: f64,
    pub lane_id: u32,
}

/// Snapshot of an agent relevant to the plan at one step.
#[derive(Clone, Copy, Debug)]
pub struct AgentSnapshot {
    /// Index into `scenario.agents`.
    pub agent_index: usize,
    pub id: u64,
    pub position: [f64; 2],
    pub speed: f64,
    /// Arc-length gap to the ego on the queried lane (positive = ahead).
    pub s_gap: f64,
}

impl Scenario {
    /// Recorded step index of "now" (the last history sample).
    pub fn current_step(&self) -> usize {
        self.meta.history_steps - 1
    }

    pub fn lane(&self, id: u32) -> Option<&Lane> {
        self.lanes.iter().find(|l| l.id == id)
    }

    /// Agent ground truth over the planning horizon: poses for steps
    /// `start_step + 1 ..= start_step + horizon`.
    pub fn agent_future(&self, agent_index: usize, start_step: usize) -> Vec<AgentPose> {
        let track = &self.agents[agent_index];
        (1..=self.meta.horizon_steps)
            .map(|k| track.pose_at(start_step + k))
            .collect()
    }
}

/// Projects a point onto a lane's centerline.
pub fn project_to_frenet(point: [f64; 2], lane: &Lane) -> FrenetPose {
    let p = lane.centerline.project(point);
    FrenetPose {
        s: p.s,
        d: p.d,
        lane_id: lane.id,
    }
}

/// Lane minimizing the absolute lateral offset; ties go to the smaller id.
pub fn nearest_lane(point: [f64; 2], lanes: &[Lane]) -> u32 {
    assert!(!lanes.is_empty(), "nearest_lane needs at least one lane");
    let mut order: Vec<&Lane> = lanes.iter().collect();
    order.sort_by_key(|l| l.id);
    let mut best = (f64::INFINITY, 0u32);
    for lane in order {
        let d = project_to_frenet(point, lane).d.abs();
        if d < best.0 {
            best = (d, lane.id);
        }
    }
    best.1
}

/// Target lane for a maneuver: left neighbor, the lane itself, or right
/// neighbor. Absent neighbors yield `None` and are masked downstream.
pub fn target_lane(current: u32, maneuver: i8, lanes: &[Lane]) -> Option<u32> {
    let lane = lanes.iter().find(|l| l.id == current)?;
    match maneuver {
        -1 => lane.left_neighbor,
        0 => Some(current),
        1 => lane.right_neighbor,
        _ => None,
    }
}

/// Nearest vehicle ahead of the ego on the given lane at a recorded step.
///
/// Membership requires the lateral offset within half the lane width; the
/// search window is [`AGENT_SEARCH_WINDOW`] of arc length ahead.
pub fn identify_lead(
    scenario: &Scenario,
    lane_id: u32,
    ego: &EgoState,
    step: usize,
) -> Option<AgentSnapshot> {
    scan_lane(scenario, lane_id, ego, step, |gap| {
        gap > 0.0 && gap <= AGENT_SEARCH_WINDOW
    })
    .into_iter()
    .min_by(|a, b| a.s_gap.partial_cmp(&b.s_gap).unwrap())
}

/// Nearest vehicle behind the ego (gap <= 0) on the given adjacent lane.
pub fn identify_rear(
    scenario: &Scenario,
    lane_id: u32,
    ego: &EgoState,
    step: usize,
) -> Option<AgentSnapshot> {
    scan_lane(scenario, lane_id, ego, step, |gap| {
        gap <= 0.0 && gap >= -AGENT_SEARCH_WINDOW
    })
    .into_iter()
    .max_by(|a, b| a.s_gap.partial_cmp(&b.s_gap).unwrap())
}

fn scan_lane(
    scenario: &Scenario,
    lane_id: u32,
    ego: &EgoState,
    step: usize,
    keep_gap: impl Fn(f64) -> bool,
) -> Vec<AgentSnapshot> {
    let lane = match scenario.lane(lane_id) {
        Some(l) => l,
        None => return Vec::new(),
    };
    let ego_s = project_to_frenet([ego.x, ego.y], lane).s;
    let mut out = Vec::new();
    for (idx, agent) in scenario.agents.iter().enumerate() {
        if agent.kind != AgentKind::Vehicle {
            continue;
        }
        let pose = agent.pose_at(step);
        let f = project_to_frenet([pose.x, pose.y], lane);
        if f.d.abs() >= lane.width / 2.0 {
            continue;
        }
        let gap = f.s - ego_s;
        if keep_gap(gap) {
            out.push(AgentSnapshot {
                agent_index: idx,
                id: agent.id,
                position: [pose.x, pose.y],
                speed: pose.speed,
                s_gap: gap,
            });
        }
    }
    out
}

/// Validates scenario invariants; used after parsing and before saving.
pub fn validate(scenario: &Scenario) -> Result<(), ScenarioError> {
    let semantic = |field: &str, msg: String| ScenarioError::Semantic {
        field: field.to_string(),
        msg,
    };
    if scenario.meta.dt <= 0.0 {
        return Err(semantic("meta.dt", "dt must be positive".into()));
    }
    if scenario.meta.history_steps == 0 {
        return Err(semantic("meta.history_steps", "must be at least 1".into()));
    }
    let mut ids = std::collections::BTreeSet::new();
    for lane in &scenario.lanes {
        if !ids.insert(lane.id) {
            return Err(semantic("lanes", format!("duplicate lane id {}", lane.id)));
        }
        if lane.width <= 0.0 || lane.speed_limit <= 0.0 {
            return Err(semantic(
                "lanes",
                format!("lane {}: width and speed_limit must be positive", lane.id),
            ));
        }
    }
    for lane in &scenario.lanes {
        for (label, nb) in [("left", lane.left_neighbor), ("right", lane.right_neighbor)] {
            if let Some(nb) = nb {
                let other = scenario
                    .lane(nb)
                    .ok_or_else(|| semantic("lanes", format!("lane {}: {label} neighbor {nb} does not exist", lane.id)))?;
                let back = if label == "left" {
                    other.right_neighbor
                } else {
                    other.left_neighbor
                };
                if back != Some(lane.id) {
                    return Err(semantic(
                        "lanes",
                        format!("lane {}: {label} neighbor {nb} is not symmetric", lane.id),
                    ));
                }
            }
        }
    }
    for agent in &scenario.agents {
        if agent.length <= 0.0 || agent.width <= 0.0 {
            return Err(semantic(
                "agents",
                format!("agent {}: length and width must be positive", agent.id),
            ));
        }
        if agent.poses.is_empty() {
            return Err(semantic("agents", format!("agent {}: empty pose track", agent.id)));
        }
    }
    for signal in &scenario.signals {
        let lane = scenario.lane(signal.lane_id).ok_or_else(|| {
            semantic("signals", format!("signal references unknown lane {}", signal.lane_id))
        })?;
        if signal.stop_line_s < 0.0 || signal.stop_line_s > lane.centerline.len() {
            return Err(semantic(
                "signals",
                format!("stop line {} outside lane {} arc range", signal.stop_line_s, lane.id),
            ));
        }
        if signal.states.is_empty() {
            return Err(semantic("signals", "empty signal state sequence".into()));
        }
    }
    let ego_lane = scenario.ego.lane_id;
    let lane = scenario
        .lane(ego_lane)
        .ok_or_else(|| semantic("ego.lane_id", format!("unknown lane {ego_lane}")))?;
    let start = scenario.ego.start;
    let f = project_to_frenet([start.x, start.y], lane);
    if f.d.abs() > lane.width / 2.0 {
        return Err(semantic(
            "ego.start",
            format!("start offset {:.3} m outside half-width of lane {ego_lane}", f.d),
        ));
    }
    if scenario.ego.length <= 0.0 || scenario.ego.width <= 0.0 || scenario.ego.wheelbase <= 0.0 {
        return Err(semantic("ego", "vehicle dimensions must be positive".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vehicle::EgoState;

    pub fn straight_lane(id: u32, y: f64, len: f64) -> Lane {
        let n = (len / 5.0).ceil() as usize;
        let pts = (0..=n)
            .map(|i| [len * i as f64 / n as f64, y])
            .collect();
        Lane {
            id,
            centerline: Polyline::new(pts).unwrap(),
            width: 3.5,
            speed_limit: 13.0,
            left_neighbor: None,
            right_neighbor: None,
        }
    }

    /// Two parallel lanes, lane 1 left (y=3.5), lane 2 right (y=0).
    fn two_lane_scenario() -> Scenario {
        let mut l1 = straight_lane(1, 3.5, 200.0);
        let mut l2 = straight_lane(2, 0.0, 200.0);
        l1.right_neighbor = Some(2);
        l2.left_neighbor = Some(1);
        Scenario {
            name: "test".into(),
            meta: ScenarioMeta {
                dt: 0.1,
                history_steps: 20,
                horizon_steps: 50,
            },
            lanes: vec![l1, l2],
            agents: vec![],
            signals: vec![],
            ego: EgoSpec {
                lane_id: 2,
                length: 4.8,
                width: 2.0,
                wheelbase: 2.8,
                start: EgoState::new(10.0, 0.0, 0.0, 10.0),
                ground_truth: vec![],
            },
        }
    }

    fn vehicle_at(id: u64, x: f64, y: f64, speed: f64) -> AgentTrack {
        AgentTrack {
            id,
            kind: AgentKind::Vehicle,
            length: 4.5,
            width: 2.0,
            poses: vec![AgentPose {
                x,
                y,
                heading: 0.0,
                speed,
            }],
        }
    }

    #[test]
    fn nearest_lane_prefers_smaller_offset() {
        let lanes = vec![straight_lane(1, 0.0, 100.0), straight_lane(2, 3.5, 100.0)];
        assert_eq!(nearest_lane([50.0, 0.2], &lanes), 1);
    }

    #[test]
    fn nearest_lane_tie_breaks_to_smaller_id() {
        let lanes = vec![straight_lane(2, 3.5, 100.0), straight_lane(1, 0.0, 100.0)];
        assert_eq!(nearest_lane([50.0, 1.75], &lanes), 1);
    }

    #[test]
    fn target_lane_cases() {
        let s = two_lane_scenario();
        assert_eq!(target_lane(2, 0, &s.lanes), Some(2));
        assert_eq!(target_lane(1, -1, &s.lanes), None);
        assert_eq!(target_lane(1, 1, &s.lanes), Some(2));
    }

    #[test]
    fn lead_lookup_filters_lane_and_picks_closest() {
        let mut s = two_lane_scenario();
        s.agents = vec![
            vehicle_at(1, 40.0, 0.0, 8.0),
            vehicle_at(2, 25.0, 0.0, 8.0),
            vehicle_at(3, 30.0, 3.5, 8.0), // adjacent lane only
        ];
        let lead = identify_lead(&s, 2, &s.ego.start, 0).unwrap();
        assert_eq!(lead.id, 2);
        assert!((lead.s_gap - 15.0).abs() < 1e-9);
        // lane-membership filter: only agent 3 is on lane 1, 20 m ahead
        let on_left = identify_lead(&s, 1, &s.ego.start, 0).unwrap();
        assert_eq!(on_left.id, 3);
        let mut s2 = two_lane_scenario();
        s2.agents = vec![vehicle_at(3, 30.0, 3.5, 8.0)];
        assert!(identify_lead(&s2, 2, &s2.ego.start, 0).is_none());
    }

    #[test]
    fn rear_lookup_picks_closest_behind() {
        let mut s = two_lane_scenario();
        s.agents = vec![vehicle_at(1, 2.0, 3.5, 12.0), vehicle_at(2, -15.0, 3.5, 12.0)];
        let rear = identify_rear(&s, 1, &s.ego.start, 0).unwrap();
        assert_eq!(rear.id, 1);
        assert!((rear.s_gap - -8.0).abs() < 1e-9);
        s.agents.clear();
        assert!(identify_rear(&s, 1, &s.ego.start, 0).is_none());
    }

    #[test]
    fn validate_rejects_asymmetric_neighbors() {
        let mut s = two_lane_scenario();
        s.lanes[1].left_neighbor = None;
        let err = validate(&s).unwrap_err();
        assert!(matches!(err, ScenarioError::Semantic { .. }));
    }

    #[test]
    fn validate_rejects_offlane_ego() {
        let mut s = two_lane_scenario();
        s.ego.start.y = 5.0;
        assert!(validate(&s).is_err());
    }
}
