//! Joint lane-selection and trajectory optimization for multi-lane driving.
//!
//! The planner relaxes the discrete lane decision into per-step continuous
//! selection variables, couples them with a kinematic bicycle model through a
//! single nonlinear least-squares objective, and solves it with damped
//! Gauss-Newton. The solver is differentiable: sensitivities of the solution
//! with respect to cost weights, initial variables, and predicted agent
//! positions are obtained by forward-mode differentiation of the unrolled
//! iterations, which is what the training loop backpropagates through.

pub mod decision;
pub mod evaluation;
pub mod initializer;
pub mod planner;
pub mod residuals;
pub mod scalar;
pub mod solver;
pub mod suite;
pub mod training;
pub mod vehicle;
pub mod world;
