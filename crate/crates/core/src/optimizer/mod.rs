//! Trajectory optimization, trajectory-set sampling, and the minimal-effort
//! correction solver.

mod bfgs;
mod config;
mod correction;
mod sampling;
mod trajectory;

pub use config::OptimizerConfig;
pub use correction::{minimal_effort_correction, CorrectionProblem, CorrectionSolution, HESSIAN_EIGEN_FLOOR};
pub use sampling::{
    anchor_normalizers, sample_normalized_trajectory_set, sample_trajectory_set, TrajectoryMember, TrajectorySet,
};
pub use trajectory::{optimize_trajectory, trajectory_cost_and_gradient, PlannedTrajectory};
