//! Sensitivity seeds and the packed sensitivity matrices of a solve.

use super::{solve_with_directions, PlanVariables, SolveError, SolveResult, SolverConfig};
use crate::residuals::{AgentPositionTangent, CostWeights, PlanContext, LEARNABLE_COUNT};
use crate::vehicle::{EgoState, VehicleParams};
use nalgebra::DMatrix;
use std::collections::BTreeSet;

/// One direction in parameter space to differentiate the solve along.
#[derive(Clone, Debug, Default)]
pub struct TangentSeed {
    /// Tangent of the initial control sequence (missing entries are zero).
    pub init_controls: Vec<[f64; 2]>,
    /// Tangent of the initial decision rows.
    pub init_decisions: Vec<[f64; 3]>,
    /// Tangent of the learnable weights, canonical order.
    pub weights: [f64; LEARNABLE_COUNT],
    /// Tangent field over predicted agent positions.
    pub agent_positions: Option<AgentPositionTangent>,
}

/// Directional derivative of the solution along one seed.
#[derive(Clone, Debug)]
pub struct SolveTangent {
    pub d_controls: Vec<[f64; 2]>,
    pub d_decisions: Vec<[f64; 3]>,
    /// Derivative of the final total squared residual.
    pub d_final_cost: f64,
}

impl SolveTangent {
    /// Flattens to the packed variable layout (controls then decisions).
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(5 * self.d_controls.len());
        for u in &self.d_controls {
            out.extend_from_slice(u);
        }
        for b in &self.d_decisions {
            out.extend_from_slice(b);
        }
        out
    }
}

/// Sensitivity matrices of the solved variables (rows follow the packed
/// layout: controls then decisions).
#[derive(Clone, Debug)]
pub struct Sensitivities {
    /// One column per learnable weight.
    pub wrt_weights: DMatrix<f64>,
    /// One column per initial control entry.
    pub wrt_init_controls: DMatrix<f64>,
    /// One column per initial decision entry.
    pub wrt_init_decisions: DMatrix<f64>,
    /// Per agent in the context: one column per predicted position entry
    /// (plan steps `1..horizon`, x then y).
    pub wrt_agent_positions: Vec<(usize, DMatrix<f64>)>,
}

/// Agent indices referenced anywhere in a context, ascending.
pub fn context_agents(ctx: &PlanContext<f64>) -> Vec<usize> {
    let mut set = BTreeSet::new();
    for ch in ctx.lead.iter().chain(ctx.rear.iter()).flatten() {
        set.insert(ch.agent_index);
    }
    for a in &ctx.interactive {
        set.insert(a.agent_index);
    }
    set.into_iter().collect()
}

/// Solves and packs full sensitivity matrices by running one tangent seed
/// per basis direction. Weight columns for weights that are exactly zero are
/// zero by convention (the square-root parameterization is not smooth
/// there).
pub fn solve_with_sensitivities(
    start: &EgoState,
    init: &PlanVariables,
    ctx: &PlanContext<f64>,
    weights: &CostWeights,
    config: &SolverConfig,
    vehicle: &VehicleParams,
    include_agent_positions: bool,
) -> Result<(SolveResult, Sensitivities), SolveError> {
    let t = ctx.horizon;
    let mut seeds = Vec::new();

    let learn = weights.learnable();
    for i in 0..LEARNABLE_COUNT {
        let mut seed = TangentSeed::default();
        if learn[i] != 0.0 {
            seed.weights[i] = 1.0;
        }
        seeds.push(seed);
    }
    for col in 0..2 * t {
        let mut seed = TangentSeed {
            init_controls: vec![[0.0; 2]; t],
            ..Default::default()
        };
        seed.init_controls[col / 2][col % 2] = 1.0;
        seeds.push(seed);
    }
    for col in 0..3 * t {
        let mut seed = TangentSeed {
            init_decisions: vec![[0.0; 3]; t],
            ..Default::default()
        };
        seed.init_decisions[col / 3][col % 3] = 1.0;
        seeds.push(seed);
    }
    let agents = if include_agent_positions {
        context_agents(ctx)
    } else {
        Vec::new()
    };
    let pos_cols = 2 * t.saturating_sub(1);
    for agent in &agents {
        for col in 0..pos_cols {
            let mut field = vec![[0.0; 2]; t - 1];
            field[col / 2][col % 2] = 1.0;
            seeds.push(TangentSeed {
                agent_positions: Some(AgentPositionTangent {
                    per_agent: vec![(*agent, field)],
                }),
                ..Default::default()
            });
        }
    }

    let (result, tangents) = solve_with_directions(start, init, ctx, weights, config, vehicle, &seeds)?;

    let n = 5 * t;
    let pack = |range: std::ops::Range<usize>| -> DMatrix<f64> {
        let cols = range.len();
        let mut m = DMatrix::zeros(n, cols);
        for (c, idx) in range.enumerate() {
            let flat = tangents[idx].flat();
            for r in 0..n {
                m[(r, c)] = flat[r];
            }
        }
        m
    };

    let mut offset = 0;
    let wrt_weights = pack(offset..offset + LEARNABLE_COUNT);
    offset += LEARNABLE_COUNT;
    let wrt_init_controls = pack(offset..offset + 2 * t);
    offset += 2 * t;
    let wrt_init_decisions = pack(offset..offset + 3 * t);
    offset += 3 * t;
    let mut wrt_agent_positions = Vec::new();
    for agent in &agents {
        wrt_agent_positions.push((*agent, pack(offset..offset + pos_cols)));
        offset += pos_cols;
    }

    Ok((
        result,
        Sensitivities {
            wrt_weights,
            wrt_init_controls,
            wrt_init_decisions,
            wrt_agent_positions,
        },
    ))
}
