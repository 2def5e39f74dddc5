//! End-to-end planning step: run the initializer, build the solve context
//! from its predictions, initialize the variables from the most likely
//! future, and solve.

use crate::decision::init_decisions;
use crate::initializer::{InitContext, Initializer, InitializerError, InitializerOutput};
use crate::residuals::{build_context, CostWeights, PlanContext};
use crate::solver::{solve, PlanVariables, SolveError, SolveResult, SolverConfig};
use crate::vehicle::{EgoState, VehicleParams};
use crate::world::Scenario;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error(transparent)]
    Initializer(#[from] InitializerError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

pub struct PlanOutcome {
    pub result: SolveResult,
    pub init: PlanVariables,
    pub futures: InitializerOutput,
    pub ctx: PlanContext<f64>,
}

/// Vehicle parameters as declared by the scenario's ego block.
pub fn vehicle_params(scenario: &Scenario) -> VehicleParams {
    VehicleParams::new(
        scenario.ego.wheelbase,
        scenario.ego.length,
        scenario.ego.width,
        scenario.meta.dt,
    )
}

/// Builds the initial plan variables from an initializer output.
pub fn init_from_futures(
    output: &InitializerOutput,
    horizon: usize,
) -> Result<PlanVariables, PlanError> {
    let best = output.most_likely();
    let decisions = init_decisions(best.decision_probs, output.mask, horizon)
        .map_err(SolveError::from)?;
    Ok(PlanVariables {
        controls: best.ego_controls.clone(),
        decisions,
    })
}

/// One full planning invocation at `start_step` from the given ego state.
pub fn plan(
    scenario: &Scenario,
    ego: &EgoState,
    start_step: usize,
    initializer: &dyn Initializer,
    weights: &CostWeights,
    config: &SolverConfig,
) -> Result<PlanOutcome, PlanError> {
    let vehicle = vehicle_params(scenario);
    let horizon = scenario.meta.horizon_steps;
    let futures = initializer.initialize(&InitContext {
        scenario,
        ego,
        start_step,
        horizon,
        weights,
        vehicle: &vehicle,
    })?;
    let ctx = build_context(
        scenario,
        &futures.predictions,
        ego,
        start_step,
        horizon,
        weights.collision_margin,
    );
    let init = init_from_futures(&futures, horizon)?;
    let result = solve(ego, &init, &ctx, weights, config, &vehicle)?;
    Ok(PlanOutcome {
        result,
        init,
        futures,
        ctx,
    })
}
