use diffplan_core::evaluation::{closed_loop_run, Termination};
use diffplan_core::initializer::HeuristicInitializer;
use diffplan_core::residuals::CostWeights;
use diffplan_core::solver::SolverConfig;
use diffplan_core::suite::generate_suite;

fn main() {
    let mut w = CostWeights::default();
    w.collision = 30.0;
    for s in generate_suite(0, 20) {
        let log = closed_loop_run(&s, &HeuristicInitializer, &w, &SolverConfig::inference(), 60, 0);
        let out = diffplan_core::planner::plan(&s, &s.ego.start, s.current_step(), &HeuristicInitializer, &w, &SolverConfig::inference()).unwrap();
        let ratio = out.result.final_cost() / out.result.initial_cost.max(1e-9);
        if log.termination != Termination::Completed || ratio > 1.0 {
            println!(
                "{}: term={:?} steps={} final_y={:.2} ratio={:.3} trace[init {:.0} -> {:?}]",
                s.name, log.termination, log.steps.len(), log.final_ego.y, ratio,
                out.result.initial_cost,
                out.result.cost_trace.iter().map(|c| c.round()).collect::<Vec<_>>()
            );
        }
    }
}
