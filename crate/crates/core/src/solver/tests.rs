use super::*;
use crate::decision::init_decisions;
use crate::residuals::tests::{make_ctx, params, replay_predictions, three_lane_scenario, vehicle_track};
use crate::residuals::{build_context, CostWeights};
use crate::vehicle::ControlInput;
use crate::world::Scenario;
use approx::assert_relative_eq;

fn single_lane_scenario() -> Scenario {
    let mut s = three_lane_scenario();
    s.lanes = vec![s.lanes[1].clone()];
    s.lanes[0].left_neighbor = None;
    s.lanes[0].right_neighbor = None;
    s
}

fn zero_init(ctx_mask: [bool; 3], t: usize, probs: [f64; 3]) -> PlanVariables {
    PlanVariables {
        controls: vec![ControlInput::new(0.0, 0.0); t],
        decisions: init_decisions(probs, ctx_mask, t).unwrap(),
    }
}

#[test]
fn linear_subproblem_solved_in_one_full_step() {
    // Straight single lane, ego centered below the speed limit: active
    // residuals (tracking-x, efficiency, comfort) are exactly linear in the
    // accelerations, so one undamped full step reaches the optimum.
    let mut s = single_lane_scenario();
    s.meta.horizon_steps = 8;
    s.ego.start.speed = 10.0;
    let w = CostWeights::default();
    let ctx = make_ctx(&s, &w);
    let t = ctx.horizon;
    let init = zero_init(ctx.mask, t, [0.0, 1.0, 0.0]);
    let config = SolverConfig {
        mode: SolverMode::Inference,
        step_size: 1.0,
        max_iters: 3,
        step_tol: 1e-9,
        damping: 0.0,
        freeze_decisions: true,
    };
    let vp = params(&s);
    let result = solve(&s.ego.start, &init, &ctx, &w, &config, &vp).unwrap();
    assert!(result.converged);
    assert_eq!(result.iterations_used, 2, "fixed point after one step");
    assert!(result.final_cost() < result.initial_cost);
    assert_relative_eq!(result.cost_trace[0], result.final_cost(), max_relative = 1e-9);
}

#[test]
fn half_step_size_halves_the_first_update() {
    let mut s = single_lane_scenario();
    s.meta.horizon_steps = 6;
    let w = CostWeights::default();
    let ctx = make_ctx(&s, &w);
    let t = ctx.horizon;
    let init = zero_init(ctx.mask, t, [0.0, 1.0, 0.0]);
    let vp = params(&s);
    let mut config = SolverConfig::inference();
    config.max_iters = 1;
    config.freeze_decisions = true;
    config.damping = 0.0;

    config.step_size = 1.0;
    let full = solve(&s.ego.start, &init, &ctx, &w, &config, &vp).unwrap();
    config.step_size = 0.5;
    let half = solve(&s.ego.start, &init, &ctx, &w, &config, &vp).unwrap();
    for k in 0..t {
        assert_relative_eq!(
            half.variables.controls[k].accel,
            0.5 * full.variables.controls[k].accel,
            epsilon = 1e-12
        );
    }
}

#[test]
fn one_step_matches_independent_least_squares() {
    // Compare the first undamped full step against an explicit pseudoinverse
    // solve of the same linearization.
    use nalgebra::{DMatrix, DVector};
    let mut s = single_lane_scenario();
    s.meta.horizon_steps = 5;
    let w = CostWeights::default();
    let ctx = make_ctx(&s, &w);
    let t = ctx.horizon;
    let init = zero_init(ctx.mask, t, [0.0, 1.0, 0.0]);
    let vp = params(&s);

    // explicit jacobian at the init (frozen decisions -> control block only)
    let lw = crate::residuals::lift_weights(&w);
    let controls: Vec<[f64; 2]> = vec![[0.0, 0.0]; t];
    let decisions = init.decisions.rows.clone();
    let traj = crate::vehicle::rollout(
        &s.ego.start,
        &init.controls,
        &vp,
    );
    let states: Vec<[f64; 4]> = traj.states.iter().map(|x| x.to_array()).collect();
    let gates = crate::residuals::compute_gates(&states, &decisions, &ctx);
    let vars = crate::residuals::PlanVars::<f64> {
        controls,
        decisions,
    };
    let lin = crate::residuals::linearize(s.ego.start.to_array(), &vars, &ctx, &lw, &gates, &vp);
    let m = lin.num_rows();
    let mut jac = DMatrix::<f64>::zeros(m, 2 * t);
    for col in 0..2 * t {
        let mut vu = vec![0.0; 2 * t];
        vu[col] = 1.0;
        let jv = lin.apply(&vu, &vec![0.0; 3 * t]);
        for (i, v) in jv.iter().enumerate() {
            jac[(i, col)] = *v;
        }
    }
    let r = DVector::from_vec(lin.residuals());
    let h = &jac.transpose() * &jac;
    let g = &jac.transpose() * &r;

    let mut config = SolverConfig::inference();
    config.max_iters = 1;
    config.step_size = 1.0;
    config.damping = 0.0;
    config.freeze_decisions = true;
    let res = solve(&s.ego.start, &init, &ctx, &w, &config, &vp).unwrap();
    let expect = h.cholesky().unwrap().solve(&g);
    for k in 0..t {
        assert_relative_eq!(res.variables.controls[k].accel, -expect[2 * k], epsilon = 1e-9);
        assert_relative_eq!(res.variables.controls[k].steer, -expect[2 * k + 1], epsilon = 1e-9);
    }
}

#[test]
fn warm_start_on_empty_road_is_already_optimal() {
    let mut s = single_lane_scenario();
    s.meta.horizon_steps = 20;
    s.ego.start.speed = 13.0; // at the limit, on the centerline
    let w = CostWeights::default();
    let ctx = make_ctx(&s, &w);
    let init = zero_init(ctx.mask, ctx.horizon, [0.0, 1.0, 0.0]);
    let vp = params(&s);
    let res = solve(&s.ego.start, &init, &ctx, &w, &SolverConfig::inference(), &vp).unwrap();
    assert!(res.converged);
    assert_eq!(res.maneuver, 0);
    for u in &res.variables.controls {
        assert!(u.accel.abs() < 0.05, "accel {}", u.accel);
        assert!(u.steer.abs() < 0.01, "steer {}", u.steer);
    }
}

#[test]
fn slow_lead_with_free_right_changes_lane() {
    let mut s = three_lane_scenario();
    // drop the left lane: ego on lane 2 with only keep/right available
    s.lanes.remove(0);
    s.lanes[0].left_neighbor = None;
    s.meta.horizon_steps = 30;
    s.ego.start.speed = 11.0;
    s.agents = vec![vehicle_track(1, 16.0, 3.5, 4.0, 120)];
    let w = CostWeights::default();
    let ctx = make_ctx(&s, &w);
    assert!(ctx.lead[1].is_some(), "slow lead on the keep lane");
    let init = zero_init(ctx.mask, ctx.horizon, [0.0, 0.5, 0.5]);
    let vp = params(&s);
    let res = solve(&s.ego.start, &init, &ctx, &w, &SolverConfig::inference(), &vp).unwrap();
    assert_eq!(res.maneuver, 1, "decisions: {:?}", &res.variables.decisions.rows[..3]);
    assert!(res.final_cost() <= res.initial_cost);
}

#[test]
fn max_iters_zero_echoes_init() {
    let s = single_lane_scenario();
    let w = CostWeights::default();
    let ctx = make_ctx(&s, &w);
    let init = zero_init(ctx.mask, ctx.horizon, [0.0, 1.0, 0.0]);
    let vp = params(&s);
    let mut config = SolverConfig::inference();
    config.max_iters = 0;
    let res = solve(&s.ego.start, &init, &ctx, &w, &config, &vp).unwrap();
    assert!(!res.converged);
    assert_eq!(res.iterations_used, 0);
    assert!(res.cost_trace.is_empty());
    for (a, b) in res.variables.controls.iter().zip(&init.controls) {
        assert_eq!(a, b);
    }
}

#[test]
fn solve_is_deterministic() {
    let mut s = three_lane_scenario();
    s.meta.horizon_steps = 12;
    s.agents = vec![vehicle_track(1, 18.0, 3.5, 6.0, 80)];
    let w = CostWeights::default();
    let ctx = make_ctx(&s, &w);
    let init = zero_init(ctx.mask, ctx.horizon, [0.2, 0.5, 0.3]);
    let vp = params(&s);
    let a = solve(&s.ego.start, &init, &ctx, &w, &SolverConfig::inference(), &vp).unwrap();
    let b = solve(&s.ego.start, &init, &ctx, &w, &SolverConfig::inference(), &vp).unwrap();
    assert_eq!(solve_result_to_json(&a), solve_result_to_json(&b));
}

#[test]
fn masked_column_init_is_gauge() {
    // garbage in the masked decision column must not change the solution
    let mut s = three_lane_scenario();
    s.lanes.remove(0); // mask the left maneuver
    s.lanes[0].left_neighbor = None;
    s.meta.horizon_steps = 10;
    s.agents = vec![vehicle_track(1, 20.0, 3.5, 6.0, 80)];
    let w = CostWeights::default();
    let ctx = make_ctx(&s, &w);
    let vp = params(&s);
    let clean = zero_init(ctx.mask, ctx.horizon, [0.0, 0.5, 0.5]);
    let mut dirty = clean.clone();
    for row in &mut dirty.decisions.rows {
        row[0] = 7.5; // masked slot
    }
    let ra = solve(&s.ego.start, &clean, &ctx, &w, &SolverConfig::inference(), &vp).unwrap();
    let rb = solve(&s.ego.start, &dirty, &ctx, &w, &SolverConfig::inference(), &vp).unwrap();
    assert_eq!(solve_result_to_json(&ra), solve_result_to_json(&rb));
}

#[test]
fn converged_rate_percentages() {
    let mut s = single_lane_scenario();
    s.ego.start.speed = 13.0; // warm start converges quickly
    let w = CostWeights::default();
    let ctx = make_ctx(&s, &w);
    let init = zero_init(ctx.mask, ctx.horizon, [0.0, 1.0, 0.0]);
    let vp = params(&s);
    let good = solve(&s.ego.start, &init, &ctx, &w, &SolverConfig::inference(), &vp).unwrap();
    let mut config = SolverConfig::inference();
    config.max_iters = 0;
    let bad = solve(&s.ego.start, &init, &ctx, &w, &config, &vp).unwrap();
    assert_eq!(converged_rate(&[good.clone()]).unwrap(), 100.0);
    assert_eq!(
        converged_rate(&[good.clone(), bad.clone(), bad.clone(), bad]).unwrap(),
        25.0
    );
    assert!(converged_rate(&[]).is_err());
}

#[test]
fn sensitivities_match_finite_differences() {
    // fixed iteration count so the unrolled derivative is the exact
    // derivative of the executed computation
    let mut s = three_lane_scenario();
    s.meta.horizon_steps = 6;
    s.ego.start.speed = 9.0;
    s.agents = vec![
        vehicle_track(1, 15.0, 3.5, 5.0, 80),
        vehicle_track(2, -9.0, 7.0, 13.0, 80),
    ];
    let mut w = CostWeights::default();
    w.track_x = 0.2;
    let start = s.current_step();
    let predictions = replay_predictions(&s, start);
    let ctx = build_context(&s, &predictions, &s.ego.start, start, s.meta.horizon_steps, w.collision_margin);
    let t = ctx.horizon;
    let init = PlanVariables {
        controls: (0..t).map(|k| ControlInput::new(0.2 * (k as f64 * 0.5).sin(), 0.02)).collect(),
        decisions: init_decisions([0.25, 0.5, 0.25], ctx.mask, t).unwrap(),
    };
    let vp = params(&s);
    let mut config = SolverConfig::training();
    config.max_iters = 3;
    config.step_tol = 0.0; // run all iterations

    let (_, sens) = solve_with_sensitivities(&s.ego.start, &init, &ctx, &w, &config, &vp, true)
        .unwrap();

    let eps = 1e-4;
    let run = |init: &PlanVariables, w: &CostWeights| -> Vec<f64> {
        let res = solve(&s.ego.start, init, &ctx, w, &config, &vp).unwrap();
        let mut flat = Vec::new();
        for u in &res.variables.controls {
            flat.push(u.accel);
            flat.push(u.steer);
        }
        for b in &res.variables.decisions.rows {
            flat.extend_from_slice(b);
        }
        flat
    };

    // learnable weights
    let learn = w.learnable();
    for (i, base) in learn.iter().enumerate() {
        let mut wp = learn;
        let mut wm = learn;
        wp[i] = base + eps;
        wm[i] = base - eps;
        let mut cw_p = w;
        cw_p.set_learnable(&wp);
        let mut cw_m = w;
        cw_m.set_learnable(&wm);
        let fp = run(&init, &cw_p);
        let fm = run(&init, &cw_m);
        for r in 0..5 * t {
            let fd = (fp[r] - fm[r]) / (2.0 * eps);
            let got = sens.wrt_weights[(r, i)];
            let denom = fd.abs().max(1e-4);
            assert!(
                ((got - fd) / denom).abs() < 1e-3,
                "weight {i} row {r}: {got} vs fd {fd}"
            );
        }
    }

    // initial control entries
    for col in 0..2 * t {
        let mut ip = init.clone();
        let mut im = init.clone();
        let (k, c) = (col / 2, col % 2);
        if c == 0 {
            ip.controls[k].accel += eps;
            im.controls[k].accel -= eps;
        } else {
            ip.controls[k].steer += eps;
            im.controls[k].steer -= eps;
        }
        let fp = run(&ip, &w);
        let fm = run(&im, &w);
        for r in 0..5 * t {
            let fd = (fp[r] - fm[r]) / (2.0 * eps);
            let got = sens.wrt_init_controls[(r, col)];
            let denom = fd.abs().max(1e-4);
            assert!(
                ((got - fd) / denom).abs() < 1e-3,
                "init-u {col} row {r}: {got} vs fd {fd}"
            );
        }
    }

    // initial decision entries
    for col in 0..3 * t {
        let (k, c) = (col / 3, col % 3);
        let mut ip = init.clone();
        let mut im = init.clone();
        ip.decisions.rows[k][c] += eps;
        im.decisions.rows[k][c] -= eps;
        let fp = run(&ip, &w);
        let fm = run(&im, &w);
        for r in 0..5 * t {
            let fd = (fp[r] - fm[r]) / (2.0 * eps);
            let got = sens.wrt_init_decisions[(r, col)];
            let denom = fd.abs().max(1e-4);
            assert!(
                ((got - fd) / denom).abs() < 1e-3,
                "init-b {col} row {r}: {got} vs fd {fd}"
            );
        }
    }
}

#[test]
fn zero_weight_gives_zero_sensitivity_column() {
    let mut s = single_lane_scenario();
    s.meta.horizon_steps = 4;
    let mut w = CostWeights::default();
    w.track_x = 0.0;
    let ctx = make_ctx(&s, &w);
    let init = zero_init(ctx.mask, ctx.horizon, [0.0, 1.0, 0.0]);
    let vp = params(&s);
    let (_, sens) =
        solve_with_sensitivities(&s.ego.start, &init, &ctx, &w, &SolverConfig::training(), &vp, false)
            .unwrap();
    for r in 0..sens.wrt_weights.nrows() {
        assert_eq!(sens.wrt_weights[(r, 0)], 0.0);
    }
}
