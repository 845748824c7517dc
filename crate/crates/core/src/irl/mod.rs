//! The learner: γ-weighted step directions, merit-based step acceptance and
//! the moving-window outer loop.

pub mod acceptance;
pub mod config;
pub mod dataset;
pub mod engine;
pub mod objective;

pub use acceptance::{
    accept_step, merit_m1, merit_m2, AcceptedState, AcceptedVia, Sample, SolverOracle, StepOutcome,
    TrajectoryOracle,
};
pub use config::{InnerSolverConfig, IrlConfig};
pub use dataset::{compute_gamma, DatasetEntry, IrlDataset};
pub use engine::{
    run, run_observed, run_with_oracle, IrlResult, IterationRecord, TerminationReason,
};
pub use objective::{nll_gradient, nll_objective, solve_step_direction};
