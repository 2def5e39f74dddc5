//! Damped Gauss-Newton solver over the plan variables, differentiable
//! through its own unrolled iterations.
//!
//! Each iteration linearizes the residual system at the current iterate
//! (with that iterate's frozen gates), solves the damped normal equations
//! with a symmetric positive-definite factorization, and applies a scaled
//! update. Tangent seeds ride along: for every seed the same factorization
//! propagates the exact directional derivative of the iterate, so after the
//! last iteration the caller holds both the solution and its sensitivities.

mod sensitivity;

pub use sensitivity::{
    solve_with_sensitivities, Sensitivities, SolveTangent, TangentSeed,
};

use crate::decision::{round_decision, DecisionError, DecisionVars, Maneuver};
use crate::residuals::{
    compute_gates, lift_context, lift_weights, lift_weights_dual, linearize, CostWeights, GateSet,
    Linearization, PlanContext, PlanVars,
};
use crate::scalar::Dual;
use crate::vehicle::{rollout, ControlInput, EgoState, Trajectory, VehicleParams};
use nalgebra::{Cholesky, DVector, Dyn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverMode {
    Training,
    Inference,
}

/// Gauss-Newton configuration. The mode presets follow the training /
/// inference split: training uses step size 0.4 with 2 iterations, inference
/// 0.5 with 10.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SolverConfig {
    pub mode: SolverMode,
    /// Update scale in (0, 1].
    pub step_size: f64,
    pub max_iters: usize,
    /// Convergence threshold on the applied update norm.
    pub step_tol: f64,
    /// Levenberg damping added to the normal-equation diagonal.
    pub damping: f64,
    /// Keep the decision variables at their initialization (used by the
    /// fixed-decision enumeration oracle).
    pub freeze_decisions: bool,
}

impl SolverConfig {
    pub fn training() -> Self {
        SolverConfig {
            mode: SolverMode::Training,
            step_size: 0.4,
            max_iters: 2,
            step_tol: 1e-3,
            damping: 1e-4,
            freeze_decisions: false,
        }
    }

    pub fn inference() -> Self {
        SolverConfig {
            mode: SolverMode::Inference,
            step_size: 0.5,
            max_iters: 10,
            step_tol: 1e-3,
            damping: 1e-4,
            freeze_decisions: false,
        }
    }

    pub fn for_mode(mode: SolverMode) -> Self {
        match mode {
            SolverMode::Training => Self::training(),
            SolverMode::Inference => Self::inference(),
        }
    }
}

/// The optimization unknowns: a control sequence and the relaxed decision
/// matrix with its availability mask.
#[derive(Clone, Debug)]
pub struct PlanVariables {
    pub controls: Vec<ControlInput>,
    pub decisions: DecisionVars,
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("non-finite residual at step {step} in block `{block}`")]
    NonFinite { step: usize, block: &'static str },
    #[error("normal-equation factorization failed after escalating damping to {damping}")]
    Factorization { damping: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Decision(#[from] DecisionError),
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub variables: PlanVariables,
    /// Rollout of the solved controls from the start state.
    pub trajectory: Trajectory,
    pub maneuver: Maneuver,
    /// Total squared residual after each applied iteration.
    pub cost_trace: Vec<f64>,
    pub initial_cost: f64,
    pub converged: bool,
    pub iterations_used: usize,
}

impl SolveResult {
    /// Total squared residual at the solution.
    pub fn final_cost(&self) -> f64 {
        *self.cost_trace.last().unwrap_or(&self.initial_cost)
    }
}

/// Percentage of converged results. Errors on an empty batch.
pub fn converged_rate(batch: &[SolveResult]) -> Result<f64, SolveError> {
    if batch.is_empty() {
        return Err(SolveError::Dimension("empty batch".into()));
    }
    let hits = batch.iter().filter(|r| r.converged).count();
    Ok(hits as f64 / batch.len() as f64 * 100.0)
}

fn non_finite_row(lin: &Linearization<f64>) -> Option<(usize, &'static str)> {
    let r = lin.residuals();
    r.iter()
        .position(|v| !v.is_finite())
        .map(|row| lin.row_label(row))
}

fn project_masked(decisions: &mut [[f64; 3]], mask: &[bool; 3]) {
    for row in decisions.iter_mut() {
        for i in 0..3 {
            if !mask[i] {
                row[i] = 0.0;
            }
        }
    }
}

struct TangentState {
    controls: Vec<[f64; 2]>,
    decisions: Vec<[f64; 3]>,
}

fn factorize(
    lin: &Linearization<f64>,
    config: &SolverConfig,
) -> Result<(Cholesky<f64, Dyn>, DVector<f64>), SolveError> {
    let include_b = !config.freeze_decisions;
    let (h, g) = lin.normal_equations(config.damping, include_b);
    let n = h.nrows();
    let mut damping = config.damping;
    let mut h_try = h.clone();
    for _ in 0..=5 {
        match Cholesky::new(h_try) {
            Some(chol) => return Ok((chol, g)),
            None => {
                let next = if damping == 0.0 { 1e-8 } else { damping * 10.0 };
                h_try = h.clone();
                for i in 0..n {
                    h_try[(i, i)] += next - config.damping;
                }
                damping = next;
            }
        }
    }
    Err(SolveError::Factorization { damping })
}

/// Solves the plan and simultaneously propagates the given tangent seeds
/// through the executed iterations. Returns the solution and, per seed, the
/// directional derivative of the solved variables and of the final cost.
pub fn solve_with_directions(
    start: &EgoState,
    init: &PlanVariables,
    ctx: &PlanContext<f64>,
    weights: &CostWeights,
    config: &SolverConfig,
    vehicle: &VehicleParams,
    seeds: &[TangentSeed],
) -> Result<(SolveResult, Vec<SolveTangent>), SolveError> {
    let t = ctx.horizon;
    if init.controls.len() != t || init.decisions.rows.len() != t {
        return Err(SolveError::Dimension(format!(
            "init has {} controls / {} decision rows for horizon {t}",
            init.controls.len(),
            init.decisions.rows.len()
        )));
    }
    if init.decisions.mask != ctx.mask {
        return Err(SolveError::Dimension(
            "init decision mask does not match the context mask".into(),
        ));
    }

    let mut controls: Vec<[f64; 2]> = init.controls.iter().map(|u| [u.accel, u.steer]).collect();
    let mut decisions = init.decisions.rows.clone();
    project_masked(&mut decisions, &ctx.mask);

    // immutable per-seed lifts
    let ctx_duals: Vec<_> = seeds
        .iter()
        .map(|s| lift_context(ctx, s.agent_positions.as_ref()))
        .collect();
    let lw_duals: Vec<_> = seeds
        .iter()
        .map(|s| lift_weights_dual(weights, &s.weights))
        .collect();
    let mut tangents: Vec<TangentState> = seeds
        .iter()
        .map(|s| {
            let mut tc = s.init_controls.clone();
            tc.resize(t, [0.0, 0.0]);
            let mut td = s.init_decisions.clone();
            td.resize(t, [0.0; 3]);
            project_masked(&mut td, &ctx.mask);
            TangentState {
                controls: tc,
                decisions: td,
            }
        })
        .collect();

    let lw = lift_weights(weights);
    let start_arr = start.to_array();
    let dual_vars = |controls: &[[f64; 2]], decisions: &[[f64; 3]], ts: &TangentState| {
        PlanVars::<Dual> {
            controls: controls
                .iter()
                .zip(&ts.controls)
                .map(|(u, du)| [Dual::new(u[0], du[0]), Dual::new(u[1], du[1])])
                .collect(),
            decisions: decisions
                .iter()
                .zip(&ts.decisions)
                .map(|(b, db)| {
                    [
                        Dual::new(b[0], db[0]),
                        Dual::new(b[1], db[1]),
                        Dual::new(b[2], db[2]),
                    ]
                })
                .collect(),
        }
    };

    let relinearize = |controls: &[[f64; 2]], decisions: &[[f64; 3]]| -> (Linearization<f64>, GateSet) {
        let ctrl: Vec<ControlInput> = controls.iter().map(|u| ControlInput::new(u[0], u[1])).collect();
        let traj = rollout(start, &ctrl, vehicle);
        let states: Vec<[f64; 4]> = traj.states.iter().map(|s| s.to_array()).collect();
        let gates = compute_gates(&states, decisions, ctx);
        let vars = PlanVars::<f64> {
            controls: controls.to_vec(),
            decisions: decisions.to_vec(),
        };
        (
            linearize(start_arr, &vars, ctx, &lw, &gates, vehicle),
            gates,
        )
    };

    let (mut lin, mut gates) = relinearize(&controls, &decisions);
    if !lin.cost.is_finite() {
        let (step, block) = non_finite_row(&lin).unwrap_or((0, "unknown"));
        return Err(SolveError::NonFinite { step, block });
    }
    let initial_cost = lin.cost;

    let mut cost_trace = Vec::new();
    let mut converged = false;
    let mut iterations_used = 0;
    let beta = config.step_size;
    let nu = 2 * t;

    for _ in 0..config.max_iters {
        let (chol, g) = factorize(&lin, config)?;
        let delta = chol.solve(&g);

        let (delta_u, delta_b): (Vec<f64>, Vec<f64>) = if config.freeze_decisions {
            (delta.as_slice().to_vec(), vec![0.0; 3 * t])
        } else {
            (
                delta.as_slice()[..nu].to_vec(),
                delta.as_slice()[nu..].to_vec(),
            )
        };

        // tangent propagation at the pre-update iterate
        for (s, ts) in tangents.iter_mut().enumerate() {
            let vars = dual_vars(&controls, &decisions, ts);
            let lin_d = linearize(start_arr, &vars, &ctx_duals[s], &lw_duals[s], &gates, vehicle);
            let r_d = lin_d.residuals();
            let (gu, gb) = lin_d.apply_transpose(&r_d);
            let jv = lin_d.apply(&delta_u, &delta_b);
            let (hu, hb) = lin_d.apply_transpose(&jv);
            let n = if config.freeze_decisions { nu } else { 5 * t };
            let mut rhs = DVector::<f64>::zeros(n);
            for j in 0..nu {
                rhs[j] = gu[j].t - hu[j].t;
            }
            if !config.freeze_decisions {
                for j in 0..3 * t {
                    rhs[nu + j] = gb[j].t - hb[j].t;
                }
            }
            let d1 = chol.solve(&rhs);
            for k in 0..t {
                ts.controls[k][0] -= beta * d1[2 * k];
                ts.controls[k][1] -= beta * d1[2 * k + 1];
            }
            if !config.freeze_decisions {
                for k in 0..t {
                    for c in 0..3 {
                        if ctx.mask[c] {
                            ts.decisions[k][c] -= beta * d1[nu + 3 * k + c];
                        }
                    }
                }
            }
        }

        // commit the base update
        let mut step_norm_sq = 0.0;
        for k in 0..t {
            controls[k][0] -= beta * delta_u[2 * k];
            controls[k][1] -= beta * delta_u[2 * k + 1];
            step_norm_sq += (beta * delta_u[2 * k]).powi(2) + (beta * delta_u[2 * k + 1]).powi(2);
        }
        if !config.freeze_decisions {
            for k in 0..t {
                for c in 0..3 {
                    if ctx.mask[c] {
                        decisions[k][c] -= beta * delta_b[3 * k + c];
                        step_norm_sq += (beta * delta_b[3 * k + c]).powi(2);
                    }
                }
            }
        }

        let (new_lin, new_gates) = relinearize(&controls, &decisions);
        if !new_lin.cost.is_finite() {
            let (step, block) = non_finite_row(&new_lin).unwrap_or((0, "unknown"));
            return Err(SolveError::NonFinite { step, block });
        }
        lin = new_lin;
        gates = new_gates;
        cost_trace.push(lin.cost);
        iterations_used += 1;

        if step_norm_sq.sqrt() < config.step_tol {
            converged = true;
            break;
        }
    }

    // directional derivative of the final cost, evaluated at the solution
    // with its own gates
    let out_tangents: Vec<SolveTangent> = tangents
        .iter()
        .enumerate()
        .map(|(s, ts)| {
            let vars = dual_vars(&controls, &decisions, ts);
            let lin_d = linearize(start_arr, &vars, &ctx_duals[s], &lw_duals[s], &gates, vehicle);
            SolveTangent {
                d_controls: ts.controls.clone(),
                d_decisions: ts.decisions.clone(),
                d_final_cost: lin_d.cost.t,
            }
        })
        .collect();

    let solved_controls: Vec<ControlInput> = controls
        .iter()
        .map(|u| ControlInput::new(u[0], u[1]))
        .collect();
    let trajectory = rollout(start, &solved_controls, vehicle);
    let decision_vars = DecisionVars {
        rows: decisions,
        mask: ctx.mask,
    };
    let maneuver = round_decision(&decision_vars);

    Ok((
        SolveResult {
            variables: PlanVariables {
                controls: solved_controls,
                decisions: decision_vars,
            },
            trajectory,
            maneuver,
            cost_trace,
            initial_cost,
            converged,
            iterations_used,
        },
        out_tangents,
    ))
}

/// Plain solve without sensitivity seeds.
pub fn solve(
    start: &EgoState,
    init: &PlanVariables,
    ctx: &PlanContext<f64>,
    weights: &CostWeights,
    config: &SolverConfig,
    vehicle: &VehicleParams,
) -> Result<SolveResult, SolveError> {
    solve_with_directions(start, init, ctx, weights, config, vehicle, &[]).map(|(r, _)| r)
}

// -------------------------------------------------------------------------
// solve-v1 document
// -------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct SolveDoc {
    schema: String,
    converged: bool,
    iterations: usize,
    maneuver: i8,
    initial_cost: f64,
    cost_trace: Vec<f64>,
    mask: [bool; 3],
    controls: Vec<[f64; 2]>,
    decisions: Vec<[f64; 3]>,
    trajectory: Vec<[f64; 4]>,
}

/// Serializes a result to the `solve-v1` JSON document.
pub fn solve_result_to_json(result: &SolveResult) -> String {
    let doc = SolveDoc {
        schema: "solve-v1".into(),
        converged: result.converged,
        iterations: result.iterations_used,
        maneuver: result.maneuver,
        initial_cost: result.initial_cost,
        cost_trace: result.cost_trace.clone(),
        mask: result.variables.decisions.mask,
        controls: result
            .variables
            .controls
            .iter()
            .map(|u| [u.accel, u.steer])
            .collect(),
        decisions: result.variables.decisions.rows.clone(),
        trajectory: result.trajectory.states.iter().map(|s| s.to_array()).collect(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("solve result serialize");
    text.push('\n');
    text
}

#[cfg(test)]
mod tests;
