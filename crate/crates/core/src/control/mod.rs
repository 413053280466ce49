//! Tracking cost, Monte Carlo reduced cost with common random numbers,
//! adjoint gradients, projection onto the admissible ball and projected
//! gradient descent.

mod cost;
mod ensemble;
mod optimize;
mod problem;
mod process;

pub use cost::{evaluate_cost, CostWeights, TrackingTarget};
pub use ensemble::{mean_and_stderr, pairwise_reduce, Ensemble, EnsembleSpec};
pub use optimize::{OptimizationResult, OptimizerOptions, Termination};
pub use problem::{project_admissible, ControlProblem, CostEstimate, Targets};
pub use process::ControlProcess;
