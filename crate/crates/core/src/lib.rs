//! Maximum-entropy inverse reinforcement learning of linear trajectory-cost
//! weights from a single demonstration, with an iterative LQR solver used
//! both to sample the partition function and to validate weight updates.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod domain;
pub mod error;
pub mod experiments;
pub mod featurizer;
pub mod io;
pub mod irl;
pub mod oc;

pub use domain::{
    demo_probability, trajectory_cost, Control, EnvironmentSpec, FeatureId, FeatureKind,
    FeatureLayout, FeatureVector, ObstacleSpec, Phase, State, Trajectory, WeightVector,
};
pub use error::{Error, Result};
pub use oc::{SolveResult, SolverConfig};
