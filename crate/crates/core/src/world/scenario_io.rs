//! `scenario-v1` JSON documents.
//!
//! All distances are meters, speeds m/s, angles radians. Signal states are a
//! compact string with one `r`/`g` character per recorded step. Documents
//! round-trip exactly: `save(load(doc))` reproduces a canonicalized document
//! byte for byte (serde_json prints f64 shortest-round-trip).

use super::{
    validate, AgentKind, AgentPose, AgentTrack, EgoSpec, Lane, Polyline, Scenario, ScenarioError,
    ScenarioMeta, SignalState, TrafficSignal,
};
use crate::vehicle::EgoState;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Serialize, Deserialize)]
struct ScenarioDoc {
    schema: String,
    name: String,
    meta: ScenarioMeta,
    lanes: Vec<LaneDoc>,
    agents: Vec<AgentDoc>,
    signals: Vec<SignalDoc>,
    ego: EgoDoc,
}

#[derive(Serialize, Deserialize)]
struct LaneDoc {
    id: u32,
    width: f64,
    speed_limit: f64,
    left_neighbor: Option<u32>,
    right_neighbor: Option<u32>,
    centerline: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct AgentDoc {
    id: u64,
    kind: AgentKind,
    length: f64,
    width: f64,
    /// One `[x, y, heading, speed]` row per recorded step.
    poses: Vec<[f64; 4]>,
}

#[derive(Serialize, Deserialize)]
struct SignalDoc {
    lane_id: u32,
    stop_line_s: f64,
    /// `r`/`g` per step.
    states: String,
}

#[derive(Serialize, Deserialize)]
struct EgoDoc {
    lane_id: u32,
    length: f64,
    width: f64,
    wheelbase: f64,
    start: [f64; 4],
    ground_truth: Vec<[f64; 4]>,
}

fn state4(row: [f64; 4]) -> EgoState {
    EgoState::new(row[0], row[1], row[2], row[3])
}

fn row4(s: &EgoState) -> [f64; 4] {
    [s.x, s.y, s.heading, s.speed]
}

pub fn load_scenario_str(text: &str) -> Result<Scenario, ScenarioError> {
    let doc: ScenarioDoc =
        serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    if doc.schema != "scenario-v1" {
        return Err(ScenarioError::Parse(format!(
            "unsupported schema `{}` (expected scenario-v1)",
            doc.schema
        )));
    }
    let mut lanes = Vec::with_capacity(doc.lanes.len());
    for l in doc.lanes {
        let centerline = Polyline::new(l.centerline).map_err(|msg| ScenarioError::Semantic {
            field: format!("lanes[{}].centerline", l.id),
            msg,
        })?;
        lanes.push(Lane {
            id: l.id,
            centerline,
            width: l.width,
            speed_limit: l.speed_limit,
            left_neighbor: l.left_neighbor,
            right_neighbor: l.right_neighbor,
        });
    }
    let agents = doc
        .agents
        .into_iter()
        .map(|a| AgentTrack {
            id: a.id,
            kind: a.kind,
            length: a.length,
            width: a.width,
            poses: a
                .poses
                .into_iter()
                .map(|p| AgentPose {
                    x: p[0],
                    y: p[1],
                    heading: p[2],
                    speed: p[3],
                })
                .collect(),
        })
        .collect();
    let mut signals = Vec::with_capacity(doc.signals.len());
    for s in doc.signals {
        let states = s
            .states
            .chars()
            .map(|c| match c {
                'r' => Ok(SignalState::Red),
                'g' => Ok(SignalState::Green),
                other => Err(ScenarioError::Semantic {
                    field: "signals.states".into(),
                    msg: format!("unknown state char `{other}`"),
                }),
            })
            .collect::<Result<Vec<_>, _>>()?;
        signals.push(TrafficSignal {
            lane_id: s.lane_id,
            stop_line_s: s.stop_line_s,
            states,
        });
    }
    let scenario = Scenario {
        name: doc.name,
        meta: doc.meta,
        lanes,
        agents,
        signals,
        ego: EgoSpec {
            lane_id: doc.ego.lane_id,
            length: doc.ego.length,
            width: doc.ego.width,
            wheelbase: doc.ego.wheelbase,
            start: state4(doc.ego.start),
            ground_truth: doc.ego.ground_truth.iter().map(|r| state4(*r)).collect(),
        },
    };
    validate(&scenario)?;
    Ok(scenario)
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    load_scenario_str(&text)
}

pub fn save_scenario_string(scenario: &Scenario) -> Result<String, ScenarioError> {
    validate(scenario)?;
    let doc = ScenarioDoc {
        schema: "scenario-v1".into(),
        name: scenario.name.clone(),
        meta: scenario.meta,
        lanes: scenario
            .lanes
            .iter()
            .map(|l| LaneDoc {
                id: l.id,
                width: l.width,
                speed_limit: l.speed_limit,
                left_neighbor: l.left_neighbor,
                right_neighbor: l.right_neighbor,
                centerline: l.centerline.points().to_vec(),
            })
            .collect(),
        agents: scenario
            .agents
            .iter()
            .map(|a| AgentDoc {
                id: a.id,
                kind: a.kind,
                length: a.length,
                width: a.width,
                poses: a.poses.iter().map(|p| [p.x, p.y, p.heading, p.speed]).collect(),
            })
            .collect(),
        signals: scenario
            .signals
            .iter()
            .map(|s| SignalDoc {
                lane_id: s.lane_id,
                stop_line_s: s.stop_line_s,
                states: s
                    .states
                    .iter()
                    .map(|st| match st {
                        SignalState::Red => 'r',
                        SignalState::Green => 'g',
                    })
                    .collect(),
            })
            .collect(),
        ego: EgoDoc {
            lane_id: scenario.ego.lane_id,
            length: scenario.ego.length,
            width: scenario.ego.width,
            wheelbase: scenario.ego.wheelbase,
            start: row4(&scenario.ego.start),
            ground_truth: scenario.ego.ground_truth.iter().map(row4).collect(),
        },
    };
    let mut text = serde_json::to_string_pretty(&doc)
        .map_err(|e| ScenarioError::Parse(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

pub fn save_scenario(scenario: &Scenario, path: &Path) -> Result<(), ScenarioError> {
    std::fs::write(path, save_scenario_string(scenario)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema": "scenario-v1",
        "name": "one-lane",
        "meta": {"dt": 0.1, "history_steps": 20, "horizon_steps": 50},
        "lanes": [{"id": 1, "width": 3.5, "speed_limit": 13.0,
                   "left_neighbor": null, "right_neighbor": null,
                   "centerline": [[0.0, 0.0], [100.0, 0.0]]}],
        "agents": [],
        "signals": [],
        "ego": {"lane_id": 1, "length": 4.8, "width": 2.0, "wheelbase": 2.8,
                "start": [5.0, 0.0, 0.0, 10.0], "ground_truth": []}
    }"#;

    #[test]
    fn minimal_document_loads() {
        let s = load_scenario_str(MINIMAL).unwrap();
        assert_eq!(s.lanes.len(), 1);
        assert_eq!(s.agents.len(), 0);
    }

    #[test]
    fn unknown_lane_reference_is_semantic_error() {
        let text = MINIMAL.replace(r#""lane_id": 1, "length""#, r#""lane_id": 7, "length""#);
        let err = load_scenario_str(&text).unwrap_err();
        assert!(matches!(err, ScenarioError::Semantic { .. }), "{err}");
    }

    #[test]
    fn malformed_json_is_parse_error() {
        let err = load_scenario_str("{not json").unwrap_err();
        assert!(matches!(err, ScenarioError::Parse(_)));
    }

    #[test]
    fn round_trip_is_identity_on_canonical_documents() {
        let s = load_scenario_str(MINIMAL).unwrap();
        let canonical = save_scenario_string(&s).unwrap();
        let reloaded = load_scenario_str(&canonical).unwrap();
        assert_eq!(save_scenario_string(&reloaded).unwrap(), canonical);
    }
}
