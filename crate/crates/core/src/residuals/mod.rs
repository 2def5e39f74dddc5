//! Cost model: residual blocks, per-solve context, and stacked assembly with
//! analytic Jacobians over the plan variables.

pub mod assemble;
pub mod blocks;
pub mod context;
pub mod weights;

pub use assemble::{linearize, Linearization, PlanVars};
pub use blocks::{
    compute_gates, lift_weights, lift_weights_dual, rows_per_step, GateSet, LiftedWeights,
};
pub use context::{
    build_context, lift_context, maneuver_slot, AgentPositionTangent, AgentPredictions,
    PlanContext, PredictedTrack, MANEUVERS,
};
pub use weights::{
    load_weights, load_weights_str, save_weights, save_weights_string, CostWeights, WeightsError,
    LEARNABLE_COUNT, LEARNABLE_NAMES,
};
