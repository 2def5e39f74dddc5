//! Stacked residual assembly over the planning horizon.
//!
//! Variables are laid out as the concatenation of the control sequence
//! (2 per step) followed by the decision matrix (3 per step). State-dependent
//! rows reach the control columns through the rollout sensitivities
//! `d state(k) / d controls`, which are propagated forward alongside the
//! rollout itself. Because the whole assembly is generic over the scalar,
//! running it on dual numbers yields the exact directional derivative of both
//! the residual vector and its Jacobian — the ingredient for differentiating
//! the solver's unrolled iterations.

use super::blocks::{emit_step, rows_per_step, GateSet, LiftedWeights, RowSink};
use super::context::PlanContext;
use crate::scalar::Real;
use crate::vehicle::{step_generic, step_jacobians_generic, VehicleParams};
use nalgebra::{DMatrix, DVector};

/// Plan variables generic over the scalar type.
#[derive(Clone, Debug)]
pub struct PlanVars<S> {
    /// `[accel, steer]` per step.
    pub controls: Vec<[S; 2]>,
    /// One row per step, slot order left / keep / right.
    pub decisions: Vec<[S; 3]>,
}

impl<S: Real> PlanVars<S> {
    pub fn lift(controls: &[[f64; 2]], decisions: &[[f64; 3]]) -> Self {
        PlanVars {
            controls: controls
                .iter()
                .map(|u| [S::constant(u[0]), S::constant(u[1])])
                .collect(),
            decisions: decisions
                .iter()
                .map(|b| [S::constant(b[0]), S::constant(b[1]), S::constant(b[2])])
                .collect(),
        }
    }
}

/// Residual rows for one plan step.
pub struct StepRows<S> {
    pub sink: RowSink<S>,
}

/// Assembled residual system at one linearization point.
pub struct Linearization<S> {
    pub horizon: usize,
    pub steps: Vec<StepRows<S>>,
    /// Rollout states, length `horizon + 1`.
    pub states: Vec<[S; 4]>,
    /// `state_sens[k][j]` = d state(k) / d control column j, for j < 2k.
    pub state_sens: Vec<Vec<[S; 4]>>,
    /// Squared norm of the stacked residual.
    pub cost: S,
    rows_per_step: usize,
}

fn mat_vec4<S: Real>(a: &[[S; 4]; 4], v: &[S; 4]) -> [S; 4] {
    let mut out = [S::constant(0.0); 4];
    for i in 0..4 {
        out[i] = a[i][0] * v[0] + a[i][1] * v[1] + a[i][2] * v[2] + a[i][3] * v[3];
    }
    out
}

fn dot4<S: Real>(a: &[S; 4], b: &[S; 4]) -> S {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

/// Rolls out the dynamics, propagates state sensitivities, and assembles all
/// residual rows under the given frozen gates.
pub fn linearize<S: Real>(
    start: [f64; 4],
    vars: &PlanVars<S>,
    ctx: &PlanContext<S>,
    lw: &LiftedWeights<S>,
    gates: &GateSet,
    vehicle: &VehicleParams,
) -> Linearization<S> {
    let t = ctx.horizon;
    assert_eq!(vars.controls.len(), t, "control sequence length");
    assert_eq!(vars.decisions.len(), t, "decision sequence length");
    assert_eq!(gates.per_step.len(), t, "gate set length");

    let x0 = [
        S::constant(start[0]),
        S::constant(start[1]),
        S::constant(start[2]),
        S::constant(start[3]),
    ];
    let mut states = Vec::with_capacity(t + 1);
    let mut state_sens: Vec<Vec<[S; 4]>> = Vec::with_capacity(t + 1);
    states.push(x0);
    state_sens.push(Vec::new());
    for k in 0..t {
        let x = states[k];
        let u = vars.controls[k];
        let (a, b) = step_jacobians_generic(&x, &u, vehicle);
        let mut cols = Vec::with_capacity(2 * (k + 1));
        for col in &state_sens[k] {
            cols.push(mat_vec4(&a, col));
        }
        cols.push([b[0][0], b[1][0], b[2][0], b[3][0]]);
        cols.push([b[0][1], b[1][1], b[2][1], b[3][1]]);
        state_sens.push(cols);
        states.push(step_generic(x, u, vehicle));
    }

    let mut steps = Vec::with_capacity(t);
    let mut cost = S::constant(0.0);
    for k in 0..t {
        let mut sink = RowSink::new();
        emit_step(
            k,
            &states[k],
            &vars.controls[k],
            &vars.decisions[k],
            ctx,
            lw,
            &gates.per_step[k],
            &mut sink,
        );
        debug_assert_eq!(sink.r.len(), rows_per_step(&ctx.mask), "row count at step {k}");
        for r in &sink.r {
            cost = cost + *r * *r;
        }
        steps.push(StepRows { sink });
    }

    Linearization {
        horizon: t,
        steps,
        states,
        state_sens,
        cost,
        rows_per_step: rows_per_step(&ctx.mask),
    }
}

impl<S: Real> Linearization<S> {
    pub fn num_rows(&self) -> usize {
        self.rows_per_step * self.horizon
    }

    pub fn residuals(&self) -> Vec<S> {
        let mut out = Vec::with_capacity(self.num_rows());
        for step in &self.steps {
            out.extend_from_slice(&step.sink.r);
        }
        out
    }

    /// Label of a flat row index, for diagnostics.
    pub fn row_label(&self, row: usize) -> (usize, &'static str) {
        let k = row / self.rows_per_step;
        (k, self.steps[k].sink.labels[row % self.rows_per_step])
    }

    /// `J v` for a direction in variable space (controls then decisions).
    pub fn apply(&self, vu: &[f64], vb: &[f64]) -> Vec<S> {
        let mut out = Vec::with_capacity(self.num_rows());
        for (k, step) in self.steps.iter().enumerate() {
            let mut sv = [S::constant(0.0); 4];
            for (j, col) in self.state_sens[k].iter().enumerate() {
                let w = vu[j];
                if w != 0.0 {
                    for i in 0..4 {
                        sv[i] = sv[i] + col[i].scale(w);
                    }
                }
            }
            let s = &step.sink;
            for i in 0..s.r.len() {
                let mut val = dot4(&s.dx[i], &sv);
                val = val + s.du[i][0].scale(vu[2 * k]) + s.du[i][1].scale(vu[2 * k + 1]);
                for c in 0..3 {
                    val = val + s.db[i][c].scale(vb[3 * k + c]);
                }
                out.push(val);
            }
        }
        out
    }

    /// `J^T y`, returned as (control part, decision part).
    pub fn apply_transpose(&self, y: &[S]) -> (Vec<S>, Vec<S>) {
        let t = self.horizon;
        let mut out_u = vec![S::constant(0.0); 2 * t];
        let mut out_b = vec![S::constant(0.0); 3 * t];
        let mut row = 0usize;
        for (k, step) in self.steps.iter().enumerate() {
            let s = &step.sink;
            let mut w4 = [S::constant(0.0); 4];
            for i in 0..s.r.len() {
                let yi = y[row + i];
                for c in 0..4 {
                    w4[c] = w4[c] + s.dx[i][c] * yi;
                }
                out_u[2 * k] = out_u[2 * k] + s.du[i][0] * yi;
                out_u[2 * k + 1] = out_u[2 * k + 1] + s.du[i][1] * yi;
                for c in 0..3 {
                    out_b[3 * k + c] = out_b[3 * k + c] + s.db[i][c] * yi;
                }
            }
            for (j, col) in self.state_sens[k].iter().enumerate() {
                out_u[j] = out_u[j] + dot4(col, &w4);
            }
            row += s.r.len();
        }
        (out_u, out_b)
    }
}

impl Linearization<f64> {
    /// Dense normal equations `(J^T J + damping I, J^T r)`.
    ///
    /// With `include_decisions = false` the system covers only the control
    /// columns (used to enumerate fixed decisions).
    pub fn normal_equations(
        &self,
        damping: f64,
        include_decisions: bool,
    ) -> (DMatrix<f64>, DVector<f64>) {
        let t = self.horizon;
        let nu = 2 * t;
        let n = if include_decisions { 5 * t } else { nu };
        let mut h = DMatrix::<f64>::zeros(n, n);
        let mut g = DVector::<f64>::zeros(n);

        for (k, step) in self.steps.iter().enumerate() {
            let s = &step.sink;
            let rows = s.r.len();
            let c = 2 * (k + 1);
            // dense row block over the active control prefix
            let mut block = DMatrix::<f64>::zeros(rows, c);
            for i in 0..rows {
                for (j, col) in self.state_sens[k].iter().enumerate() {
                    block[(i, j)] = dot4(col, &s.dx[i]);
                }
                block[(i, 2 * k)] = s.du[i][0];
                block[(i, 2 * k + 1)] = s.du[i][1];
            }
            let r_k = DVector::from_iterator(rows, s.r.iter().copied());
            h.view_mut((0, 0), (c, c)).gemm_tr(1.0, &block, &block, 1.0);
            g.rows_mut(0, c).gemv_tr(1.0, &block, &r_k, 1.0);

            if include_decisions {
                let mut db = DMatrix::<f64>::zeros(rows, 3);
                for i in 0..rows {
                    for c3 in 0..3 {
                        db[(i, c3)] = s.db[i][c3];
                    }
                }
                let bcol = nu + 3 * k;
                h.view_mut((0, bcol), (c, 3)).gemm_tr(1.0, &block, &db, 1.0);
                h.view_mut((bcol, bcol), (3, 3)).gemm_tr(1.0, &db, &db, 1.0);
                g.rows_mut(bcol, 3).gemv_tr(1.0, &db, &r_k, 1.0);
            }
        }

        if include_decisions {
            // mirror the control/decision cross blocks
            for k in 0..t {
                let bcol = nu + 3 * k;
                for j in 0..3 {
                    for i in 0..2 * (k + 1) {
                        h[(bcol + j, i)] = h[(i, bcol + j)];
                    }
                }
            }
        }
        for i in 0..n {
            h[(i, i)] += damping;
        }
        (h, g)
    }
}
