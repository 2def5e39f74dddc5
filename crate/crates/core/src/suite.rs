//! Deterministic synthetic scenario suite.
//!
//! Five parameterized templates cover the behaviors the evaluation cares
//! about: overtaking a slow lead with a free right lane, keeping lane when
//! the adjacent lanes are blocked, stopping at a red light, plain car
//! following, and yielding to a fast vehicle approaching from behind.
//! Generation is seeded per (suite seed, template, instance) so files are
//! reproducible regardless of generation order.

use crate::scalar::wrap_angle;
use crate::vehicle::{step, ControlInput, EgoState, VehicleParams};
use crate::world::{
    AgentKind, AgentPose, AgentTrack, EgoSpec, Lane, Polyline, Scenario, ScenarioMeta,
    SignalState, TrafficSignal,
};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const HISTORY_STEPS: usize = 20;
pub const HORIZON_STEPS: usize = 50;
pub const DT: f64 = 0.1;
/// Recorded steps per agent: history, a 150-step episode, and horizon slack.
pub const TRACK_STEPS: usize = HISTORY_STEPS + 150 + HORIZON_STEPS + 10;

const LANE_WIDTH: f64 = 3.5;
const LANE_START_X: f64 = -60.0;
const LANE_END_X: f64 = 420.0;

/// A named scenario template.
pub struct Template {
    pub name: &'static str,
    pub generate: fn(&mut ChaCha8Rng, &str) -> Scenario,
}

/// Template registry, in generation order.
pub fn templates() -> &'static [Template] {
    &[
        Template {
            name: "slow-lead-free-right",
            generate: gen_slow_lead,
        },
        Template {
            name: "blocked-adjacent",
            generate: gen_blocked_adjacent,
        },
        Template {
            name: "red-light",
            generate: gen_red_light,
        },
        Template {
            name: "car-following",
            generate: gen_car_following,
        },
        Template {
            name: "yielding",
            generate: gen_yielding,
        },
    ]
}

pub fn template_by_name(name: &str) -> Option<&'static Template> {
    templates().iter().find(|t| t.name == name)
}

/// Generates `count` scenarios cycling through the templates.
pub fn generate_suite(seed: u64, count: usize) -> Vec<Scenario> {
    let reg = templates();
    (0..count)
        .map(|i| {
            let template = &reg[i % reg.len()];
            generate_instance(template, seed, i)
        })
        .collect()
}

/// One deterministic instance of a template.
pub fn generate_instance(template: &Template, seed: u64, index: usize) -> Scenario {
    // fold the template name and index into the stream seed
    let tag: u64 = template
        .name
        .bytes()
        .fold(0u64, |h, b| h.wrapping_mul(131).wrapping_add(b as u64));
    let mut rng = ChaCha8Rng::seed_from_u64(
        seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
            ^ tag.wrapping_mul(0x2545_f491_4f6c_dd1d)
            ^ (index as u64).wrapping_mul(0x1000_0000_1b3),
    );
    let name = format!("{}-{:02}", template.name, index);
    (template.generate)(&mut rng, &name)
}

fn straight_lane(id: u32, y: f64, limit: f64) -> Lane {
    let n = ((LANE_END_X - LANE_START_X) / 4.0).ceil() as usize;
    let pts = (0..=n)
        .map(|i| {
            [
                LANE_START_X + (LANE_END_X - LANE_START_X) * i as f64 / n as f64,
                y,
            ]
        })
        .collect();
    Lane {
        id,
        centerline: Polyline::new(pts).unwrap(),
        width: LANE_WIDTH,
        speed_limit: limit,
        left_neighbor: None,
        right_neighbor: None,
    }
}

/// Lanes ordered left to right (ids 1..), linked as neighbors. Travel is
/// along +x, so "left" is +y.
fn lane_row(count: usize, limit: f64) -> Vec<Lane> {
    let mut lanes: Vec<Lane> = (0..count)
        .map(|i| straight_lane(i as u32 + 1, LANE_WIDTH * (count - 1 - i) as f64, limit))
        .collect();
    for i in 0..count {
        if i > 0 {
            lanes[i].left_neighbor = Some(i as u32);
        }
        if i + 1 < count {
            lanes[i].right_neighbor = Some(i as u32 + 2);
        }
    }
    lanes
}

/// Constant-speed agent along +x, at `x` when the episode starts.
fn cruising_vehicle(id: u64, x: f64, y: f64, speed: f64) -> AgentTrack {
    AgentTrack {
        id,
        kind: AgentKind::Vehicle,
        length: 4.5,
        width: 2.0,
        poses: (0..TRACK_STEPS)
            .map(|k| AgentPose {
                x: x + speed * DT * (k as f64 - (HISTORY_STEPS - 1) as f64),
                y,
                heading: 0.0,
                speed,
            })
            .collect(),
    }
}

fn ego_spec(lane_id: u32, x: f64, y: f64, speed: f64) -> EgoSpec {
    EgoSpec {
        lane_id,
        length: 4.8,
        width: 2.0,
        wheelbase: 2.8,
        start: EgoState::new(x, y, 0.0, speed),
        ground_truth: Vec::new(),
    }
}

fn meta() -> ScenarioMeta {
    ScenarioMeta {
        dt: DT,
        history_steps: HISTORY_STEPS,
        horizon_steps: HORIZON_STEPS,
    }
}

/// Desired-speed profile for the scripted human trajectory.
enum SpeedRule {
    /// Drive at the lane limit.
    Limit,
    /// Hold a target speed (e.g. match the lead).
    Hold(f64),
    /// Brake to stop just before an arc position on the lane.
    StopAt(f64),
}

/// Scripted ground truth: proportional lane tracking with a speed rule,
/// rolled through the vehicle model so it is dynamically feasible.
fn scripted_ground_truth(scenario: &mut Scenario, rule: SpeedRule) {
    let vehicle = VehicleParams::new(
        scenario.ego.wheelbase,
        scenario.ego.length,
        scenario.ego.width,
        scenario.meta.dt,
    );
    let lane = scenario.lane(scenario.ego.lane_id).unwrap().clone();
    let mut x = scenario.ego.start;
    let mut out = vec![x];
    for _ in 0..scenario.meta.horizon_steps {
        let proj = lane.centerline.project(x.position());
        let lookahead = (0.8 * x.speed).max(4.0);
        let target = lane.centerline.point_at(proj.s + lookahead);
        let desired_heading = (target[1] - x.y).atan2(target[0] - x.x);
        let err = wrap_angle(desired_heading - x.heading);
        let steer = (2.0 * vehicle.wheelbase * err.sin() / lookahead).atan();
        let v_des = match rule {
            SpeedRule::Limit => lane.speed_limit,
            SpeedRule::Hold(v) => v,
            SpeedRule::StopAt(stop_s) => {
                let dist = (stop_s - proj.s - 1.0).max(0.0);
                (2.0 * 1.5 * dist).sqrt().min(lane.speed_limit)
            }
        };
        let accel = 0.8 * (v_des - x.speed);
        x = step(&x, &ControlInput::new(accel, steer), &vehicle);
        out.push(x);
    }
    scenario.ego.ground_truth = out;
}

fn gen_slow_lead(rng: &mut ChaCha8Rng, name: &str) -> Scenario {
    let limit = rng.gen_range(12.0..14.0);
    let ego_speed = rng.gen_range(9.0..11.0);
    let lead_speed = rng.gen_range(3.5..5.5);
    let lead_gap = rng.gen_range(16.0..26.0);
    // two lanes, ego on the left one; the right lane is free
    let lanes = lane_row(2, limit);
    let mut s = Scenario {
        name: name.into(),
        meta: meta(),
        agents: vec![cruising_vehicle(1, lead_gap, LANE_WIDTH, lead_speed)],
        signals: vec![],
        ego: ego_spec(1, 0.0, LANE_WIDTH, ego_speed),
        lanes,
    };
    // the demonstrated driver stays behind the slow lead
    scripted_ground_truth(&mut s, SpeedRule::Hold(lead_speed));
    s
}

fn gen_blocked_adjacent(rng: &mut ChaCha8Rng, name: &str) -> Scenario {
    let limit = rng.gen_range(12.0..14.0);
    let ego_speed = rng.gen_range(9.0..11.5);
    let blocker_speed = rng.gen_range(4.0..6.0);
    let left_gap = rng.gen_range(10.0..18.0);
    let right_gap = rng.gen_range(10.0..18.0);
    let lanes = lane_row(3, limit);
    let mut s = Scenario {
        name: name.into(),
        meta: meta(),
        agents: vec![
            cruising_vehicle(1, left_gap, 2.0 * LANE_WIDTH, blocker_speed),
            cruising_vehicle(2, right_gap, 0.0, blocker_speed),
        ],
        signals: vec![],
        ego: ego_spec(2, 0.0, LANE_WIDTH, ego_speed),
        lanes,
    };
    scripted_ground_truth(&mut s, SpeedRule::Limit);
    s
}

fn gen_red_light(rng: &mut ChaCha8Rng, name: &str) -> Scenario {
    let limit = rng.gen_range(12.0..14.0);
    let ego_speed = rng.gen_range(7.0..9.0);
    let stop_ahead = rng.gen_range(28.0..40.0);
    let lanes = lane_row(1, limit);
    let stop_line_s = -LANE_START_X + stop_ahead; // ego starts at x = 0
    let mut s = Scenario {
        name: name.into(),
        meta: meta(),
        agents: vec![],
        signals: vec![TrafficSignal {
            lane_id: 1,
            stop_line_s,
            states: vec![SignalState::Red; TRACK_STEPS],
        }],
        ego: ego_spec(1, 0.0, 0.0, ego_speed),
        lanes,
    };
    scripted_ground_truth(&mut s, SpeedRule::StopAt(stop_line_s));
    s
}

fn gen_car_following(rng: &mut ChaCha8Rng, name: &str) -> Scenario {
    let limit = rng.gen_range(12.0..14.0);
    let ego_speed = rng.gen_range(8.0..10.0);
    let lead_speed = rng.gen_range(7.0..9.5);
    let lead_gap = rng.gen_range(20.0..32.0);
    let lanes = lane_row(1, limit);
    let mut s = Scenario {
        name: name.into(),
        meta: meta(),
        agents: vec![cruising_vehicle(1, lead_gap, 0.0, lead_speed)],
        signals: vec![],
        ego: ego_spec(1, 0.0, 0.0, ego_speed),
        lanes,
    };
    scripted_ground_truth(&mut s, SpeedRule::Hold(lead_speed));
    s
}

fn gen_yielding(rng: &mut ChaCha8Rng, name: &str) -> Scenario {
    let limit = rng.gen_range(12.0..14.0);
    let ego_speed = rng.gen_range(8.0..10.0);
    let lead_speed = rng.gen_range(6.5..8.0);
    let lead_gap = rng.gen_range(24.0..34.0);
    let rear_speed = limit + rng.gen_range(0.5..1.5);
    let rear_gap = rng.gen_range(8.0..14.0);
    // ego on the right lane; fast vehicle closing from behind on the left
    let lanes = lane_row(2, limit);
    let mut s = Scenario {
        name: name.into(),
        meta: meta(),
        agents: vec![
            cruising_vehicle(1, lead_gap, 0.0, lead_speed),
            cruising_vehicle(2, -rear_gap, LANE_WIDTH, rear_speed),
        ],
        signals: vec![],
        ego: ego_spec(2, 0.0, 0.0, ego_speed),
        lanes,
    };
    scripted_ground_truth(&mut s, SpeedRule::Hold(lead_speed));
    s
}
