//! Residual blocks.
//!
//! Every cost term is expressed as rows `r` of a least-squares system so the
//! total cost is the squared norm of the stacked vector. A decision variable
//! enters as the multiplier `sqrt(clip(b, 0, 1))`, which reproduces the
//! `b * cost` weighting when squared. Hinge terms become squared hinges.
//!
//! Discrete switches (speed-difference indicators, hinge activity, the
//! nearest collision agent) are evaluated once per linearization point in a
//! [`GateSet`] and held fixed while that iteration's rows are assembled, so
//! each iteration sees a smooth residual map.

use super::context::{maneuver_slot, PlanContext, MANEUVERS};
use super::weights::CostWeights;
use crate::scalar::{Dual, Real};

/// Derivative cap floor for `sqrt(clip(b))` near zero.
const SQRT_CLIP_FLOOR: f64 = 1e-6;

/// `sqrt(clip(b, 0, 1))` with projection semantics outside the unit interval
/// and a capped derivative near zero (evaluates the slope of
/// `sqrt(max(b, 1e-6))`).
pub fn sqrt_clip<S: Real>(b: S) -> S {
    let c = b.clamp_value(0.0, 1.0);
    if c.value() >= SQRT_CLIP_FLOOR {
        c.sqrt()
    } else {
        let slope = 0.5 / SQRT_CLIP_FLOOR.sqrt();
        let v = c.value().sqrt();
        c.scale(slope) + S::constant(v - slope * c.value())
    }
}

/// Derivative of [`sqrt_clip`] with respect to `b`, as a scalar expression so
/// dual passes carry its curvature.
pub fn sqrt_clip_deriv<S: Real>(b: S) -> S {
    let bv = b.value();
    if !(0.0..=1.0).contains(&bv) {
        return S::constant(0.0);
    }
    if bv < SQRT_CLIP_FLOOR {
        return S::constant(0.5 / SQRT_CLIP_FLOOR.sqrt());
    }
    S::constant(0.5) / b.sqrt()
}

/// Square roots of the cost weights, precomputed once per linearization.
/// Learnable entries may carry tangents in sensitivity passes.
#[derive(Clone, Debug)]
pub struct LiftedWeights<S> {
    pub track_x: S,
    pub track_y: S,
    pub lead_speed: S,
    pub lead_gap: S,
    pub rear_speed: S,
    pub rear_gap: S,
    pub efficiency: S,
    pub comfort_accel: S,
    pub comfort_steer: S,
    pub collision: S,
    pub traffic: S,
    pub decision_binary: S,
    pub decision_sum: S,
    pub gap_epsilon: f64,
}

pub fn lift_weights(w: &CostWeights) -> LiftedWeights<f64> {
    LiftedWeights {
        track_x: w.track_x.sqrt(),
        track_y: w.track_y.sqrt(),
        lead_speed: w.lead_speed.sqrt(),
        lead_gap: w.lead_gap.sqrt(),
        rear_speed: w.rear_speed.sqrt(),
        rear_gap: w.rear_gap.sqrt(),
        efficiency: w.efficiency.sqrt(),
        comfort_accel: w.comfort_accel.sqrt(),
        comfort_steer: w.comfort_steer.sqrt(),
        collision: w.collision.sqrt(),
        traffic: w.traffic.sqrt(),
        decision_binary: w.decision_binary.sqrt(),
        decision_sum: w.decision_sum.sqrt(),
        gap_epsilon: w.gap_epsilon,
    }
}

/// Lift with a tangent on the learnable weights (canonical order of
/// [`super::weights::LEARNABLE_NAMES`]). A zero weight keeps a zero tangent:
/// its sensitivity column is zero by convention.
pub fn lift_weights_dual(
    w: &CostWeights,
    tangent: &[f64; super::weights::LEARNABLE_COUNT],
) -> LiftedWeights<Dual> {
    let learn = w.learnable();
    let d = |i: usize| Dual::new(learn[i], tangent[i]).sqrt();
    LiftedWeights {
        track_x: d(0),
        track_y: d(1),
        lead_speed: d(2),
        lead_gap: d(3),
        rear_speed: d(4),
        rear_gap: d(5),
        efficiency: d(6),
        comfort_accel: d(7),
        comfort_steer: d(8),
        collision: Dual::constant(w.collision.sqrt()),
        traffic: Dual::constant(w.traffic.sqrt()),
        decision_binary: Dual::constant(w.decision_binary.sqrt()),
        decision_sum: Dual::constant(w.decision_sum.sqrt()),
        gap_epsilon: w.gap_epsilon,
    }
}

/// Frozen discrete state for one plan step.
#[derive(Clone, Copy, Debug, Default)]
pub struct StepGates {
    /// Lead slower than ego (velocity term active), per maneuver slot.
    pub lead_gate: [bool; 3],
    /// Rear neighbor faster than ego, per maneuver slot.
    pub rear_gate: [bool; 3],
    /// Nearest interactive agent index and whether the hinge is active.
    pub collision: Option<(usize, bool)>,
    /// Red light with the projected travel beyond the stop line.
    pub traffic_active: bool,
    /// Outside the unit interval, per decision slot.
    pub binary_active: [bool; 3],
}

#[derive(Clone, Debug)]
pub struct GateSet {
    pub per_step: Vec<StepGates>,
}

/// Evaluates all gates at a linearization point.
pub fn compute_gates(
    states: &[[f64; 4]],
    decisions: &[[f64; 3]],
    ctx: &PlanContext<f64>,
) -> GateSet {
    let mut per_step = Vec::with_capacity(ctx.horizon);
    for k in 0..ctx.horizon {
        let x = states[k];
        let speed = x[3];
        let mut g = StepGates::default();
        for m in MANEUVERS {
            let slot = maneuver_slot(m);
            if let Some(ch) = &ctx.lead[slot] {
                g.lead_gate[slot] = ch.speeds[k] - speed < 0.0;
            }
            if let Some(ch) = &ctx.rear[slot] {
                g.rear_gate[slot] = ch.speeds[k] - speed > 0.0;
            }
        }
        if !ctx.interactive.is_empty() {
            let mut nearest = (0usize, f64::INFINITY);
            for (i, agent) in ctx.interactive.iter().enumerate() {
                let q = agent.positions[k];
                let d = ((x[0] - q[0]).powi(2) + (x[1] - q[1]).powi(2)).sqrt();
                if d < nearest.1 {
                    nearest = (i, d);
                }
            }
            let active = nearest.1 < ctx.interactive[nearest.0].threshold;
            g.collision = Some((nearest.0, active));
        }
        if let Some(sig) = &ctx.signal {
            if sig.red[k] {
                let s = ctx.lane_line.project([x[0], x[1]]).s;
                g.traffic_active = s + speed * ctx.dt - sig.stop_line_s > 0.0;
            }
        }
        for (i, b) in decisions[k].iter().enumerate() {
            g.binary_active[i] = b * (b - 1.0) > 0.0;
        }
        per_step.push(g);
    }
    GateSet { per_step }
}

/// Append-only sink for residual rows and their local derivatives.
pub struct RowSink<S> {
    pub r: Vec<S>,
    /// d row / d state(k)
    pub dx: Vec<[S; 4]>,
    /// d row / d raw control(k)
    pub du: Vec<[S; 2]>,
    /// d row / d decisions(k)
    pub db: Vec<[S; 3]>,
    pub labels: Vec<&'static str>,
}

impl<S: Real> RowSink<S> {
    pub fn new() -> Self {
        RowSink {
            r: Vec::new(),
            dx: Vec::new(),
            du: Vec::new(),
            db: Vec::new(),
            labels: Vec::new(),
        }
    }

    fn push(&mut self, label: &'static str, r: S, dx: [S; 4], du: [S; 2], db: [S; 3]) {
        self.r.push(r);
        self.dx.push(dx);
        self.du.push(du);
        self.db.push(db);
        self.labels.push(label);
    }

    fn push_zero(&mut self, label: &'static str) {
        let z = S::constant(0.0);
        self.push(label, z, [z; 4], [z; 2], [z; 3]);
    }
}

fn z<S: Real>() -> S {
    S::constant(0.0)
}

/// Emits every residual row for one plan step.
#[allow(clippy::too_many_arguments)]
pub fn emit_step<S: Real>(
    k: usize,
    x: &[S; 4],
    u: &[S; 2],
    b: &[S; 3],
    ctx: &PlanContext<S>,
    lw: &LiftedWeights<S>,
    gates: &StepGates,
    sink: &mut RowSink<S>,
) {
    let eps2 = lw.gap_epsilon * lw.gap_epsilon;

    // position tracking toward each candidate lane's reference point
    for m in MANEUVERS {
        let slot = maneuver_slot(m);
        if !ctx.mask[slot] {
            continue;
        }
        let sb = sqrt_clip(b[slot]);
        let dsb = sqrt_clip_deriv(b[slot]);
        let rp = ctx.references[slot][k];
        let ex = x[0] - S::constant(rp[0]);
        let ey = x[1] - S::constant(rp[1]);

        let mut db = [z(); 3];
        db[slot] = lw.track_x * dsb * ex;
        sink.push(
            "track",
            lw.track_x * sb * ex,
            [lw.track_x * sb, z(), z(), z()],
            [z(); 2],
            db,
        );
        let mut db = [z(); 3];
        db[slot] = lw.track_y * dsb * ey;
        sink.push(
            "track",
            lw.track_y * sb * ey,
            [z(), lw.track_y * sb, z(), z()],
            [z(); 2],
            db,
        );
    }

    // lead-vehicle safety: speed closing term plus inverse-square gap term
    for m in MANEUVERS {
        let slot = maneuver_slot(m);
        if !ctx.mask[slot] {
            continue;
        }
        match &ctx.lead[slot] {
            None => {
                sink.push_zero("lead");
                sink.push_zero("lead");
            }
            Some(ch) => {
                let sb = sqrt_clip(b[slot]);
                let dsb = sqrt_clip_deriv(b[slot]);
                let gate = S::constant(if gates.lead_gate[slot] { 1.0 } else { 0.0 });
                let dv = S::constant(ch.speeds[k]) - x[3];
                let mut db = [z(); 3];
                db[slot] = lw.lead_speed * gate * dsb * dv;
                sink.push(
                    "lead",
                    lw.lead_speed * gate * sb * dv,
                    [z(), z(), z(), -(lw.lead_speed * gate * sb)],
                    [z(); 2],
                    db,
                );

                let q = ch.positions[k];
                let dpx = x[0] - q[0];
                let dpy = x[1] - q[1];
                let dist = dpx.hypot2(dpy);
                let inv_dist = if dist.value() > 1e-9 {
                    S::constant(1.0) / dist
                } else {
                    z()
                };
                let gap = dist - S::constant(ctx.ego_body_length);
                let den2 = gap * gap + S::constant(eps2);
                let den = den2.sqrt();
                let common = lw.lead_gap * sb * (-gap / (den2 * den));
                let mut db = [z(); 3];
                db[slot] = lw.lead_gap * dsb / den;
                sink.push(
                    "lead",
                    lw.lead_gap * sb / den,
                    [common * dpx * inv_dist, common * dpy * inv_dist, z(), z()],
                    [z(); 2],
                    db,
                );
            }
        }
    }

    // rear-neighbor safety on the adjacent lanes only
    for m in [-1i8, 1] {
        let slot = maneuver_slot(m);
        if !ctx.mask[slot] {
            continue;
        }
        match &ctx.rear[slot] {
            None => {
                sink.push_zero("rear");
                sink.push_zero("rear");
            }
            Some(ch) => {
                let sb = sqrt_clip(b[slot]);
                let dsb = sqrt_clip_deriv(b[slot]);
                let gate = S::constant(if gates.rear_gate[slot] { 1.0 } else { 0.0 });
                let dv = S::constant(ch.speeds[k]) - x[3];
                let mut db = [z(); 3];
                db[slot] = lw.rear_speed * gate * dsb * dv;
                sink.push(
                    "rear",
                    lw.rear_speed * gate * sb * dv,
                    [z(), z(), z(), -(lw.rear_speed * gate * sb)],
                    [z(); 2],
                    db,
                );

                let q = ch.positions[k];
                let dpx = x[0] - q[0];
                let dpy = x[1] - q[1];
                let dist = dpx.hypot2(dpy);
                let inv_dist = if dist.value() > 1e-9 {
                    S::constant(1.0) / dist
                } else {
                    z()
                };
                let gap = dist - S::constant(ctx.ego_body_length);
                let den2 = gap * gap + S::constant(eps2);
                let den = den2.sqrt();
                let common = lw.rear_gap * sb * (-gap / (den2 * den));
                let mut db = [z(); 3];
                db[slot] = lw.rear_gap * dsb / den;
                sink.push(
                    "rear",
                    lw.rear_gap * sb / den,
                    [common * dpx * inv_dist, common * dpy * inv_dist, z(), z()],
                    [z(); 2],
                    db,
                );
            }
        }
    }

    // traveling efficiency toward each candidate lane's speed limit
    for m in MANEUVERS {
        let slot = maneuver_slot(m);
        if !ctx.mask[slot] {
            continue;
        }
        let sb = sqrt_clip(b[slot]);
        let dsb = sqrt_clip_deriv(b[slot]);
        let dv = x[3] - S::constant(ctx.speed_limits[slot]);
        let mut db = [z(); 3];
        db[slot] = lw.efficiency * dsb * dv;
        sink.push(
            "efficiency",
            lw.efficiency * sb * dv,
            [z(), z(), z(), lw.efficiency * sb],
            [z(); 2],
            db,
        );
    }

    // riding comfort on the raw control inputs
    sink.push(
        "comfort",
        lw.comfort_accel * u[0],
        [z(); 4],
        [lw.comfort_accel, z()],
        [z(); 3],
    );
    sink.push(
        "comfort",
        lw.comfort_steer * u[1],
        [z(); 4],
        [z(), lw.comfort_steer],
        [z(); 3],
    );

    // collision hinge against the frozen nearest interactive agent
    match gates.collision {
        Some((idx, true)) => {
            let agent = &ctx.interactive[idx];
            let q = agent.positions[k];
            let dpx = x[0] - q[0];
            let dpy = x[1] - q[1];
            let dist = dpx.hypot2(dpy);
            let inv_dist = if dist.value() > 1e-9 {
                S::constant(1.0) / dist
            } else {
                z()
            };
            sink.push(
                "collision",
                lw.collision * (S::constant(agent.threshold) - dist),
                [
                    -(lw.collision * dpx * inv_dist),
                    -(lw.collision * dpy * inv_dist),
                    z(),
                    z(),
                ],
                [z(); 2],
                [z(); 3],
            );
        }
        _ => sink.push_zero("collision"),
    }

    // red-light hinge: projected travel beyond the stop line
    match (&ctx.signal, gates.traffic_active) {
        (Some(sig), true) => {
            let (s, tangent) = ctx.lane_line.project_arc_generic([x[0], x[1]]);
            let travel = s + x[3].scale(ctx.dt) - S::constant(sig.stop_line_s);
            sink.push(
                "traffic",
                lw.traffic * travel,
                [
                    lw.traffic.scale(tangent[0]),
                    lw.traffic.scale(tangent[1]),
                    z(),
                    lw.traffic.scale(ctx.dt),
                ],
                [z(); 2],
                [z(); 3],
            );
        }
        _ => sink.push_zero("traffic"),
    }

    // relaxed-binary hinge, active only outside the unit interval
    for i in 0..3 {
        if gates.binary_active[i] {
            let bi = b[i];
            let mut db = [z(); 3];
            db[i] = lw.decision_binary * (bi.scale(2.0) - S::constant(1.0));
            sink.push(
                "binary",
                lw.decision_binary * (bi * bi - bi),
                [z(); 4],
                [z(); 2],
                db,
            );
        } else {
            sink.push_zero("binary");
        }
    }

    // sum-to-one residual over the available decisions (masked slots are
    // treated as zero and get no derivative)
    let mut sum = S::constant(-1.0);
    let mut db = [z(); 3];
    for m in MANEUVERS {
        let slot = maneuver_slot(m);
        if ctx.mask[slot] {
            sum = sum + b[slot];
            db[slot] = lw.decision_sum;
        }
    }
    sink.push("sum", lw.decision_sum * sum, [z(); 4], [z(); 2], db);
}

/// Number of rows [`emit_step`] produces for a context's mask.
pub fn rows_per_step(mask: &[bool; 3]) -> usize {
    let avail = mask.iter().filter(|a| **a).count();
    let adjacent = [mask[0], mask[2]].iter().filter(|a| **a).count();
    avail * 2 + avail * 2 + adjacent * 2 + avail + 2 + 1 + 1 + 3 + 1
}
