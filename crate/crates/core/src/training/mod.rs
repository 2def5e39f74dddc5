//! Outer-loop learning: losses, the adaptive-moment optimizer, and the
//! joint training step that backpropagates through the unrolled solver.

mod adam;
mod losses;
mod run;


pub use adam::AdamState;
pub use losses::{
    decision_loss, huber, imitation_loss, planning_loss, position_smooth_l1, prediction_loss,
    pretrain_loss, score_loss, smooth_l1, total_loss, LossBreakdown, LossWeights,
};
pub use run::{
    load_checkpoint, pretrain_step, save_checkpoint, train_step, StepReport, TrainError,
    TrainState, TrainingConfig,
};
