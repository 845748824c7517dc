use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Settings of the proximal-gradient step-direction solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerSolverConfig {
    pub max_iterations: usize,
    pub step_tolerance: f64,
    /// Margin keeping updated weights strictly positive.
    pub box_epsilon: f64,
}

impl Default for InnerSolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            step_tolerance: 1e-8,
            box_epsilon: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrlConfig {
    /// Number of most recent sampled trajectories kept in the dataset.
    pub window: usize,
    /// Number of suffix truncations per trajectory.
    pub subsamples: usize,
    pub lambda_l1: f64,
    pub beta_l2: f64,
    pub wolfe_c1: f64,
    pub wolfe_c2: f64,
    pub alpha_shrink: f64,
    pub max_step_trials: usize,
    pub w_init_value: f64,
    pub weight_upper_bound: Option<f64>,
    pub max_outer_iterations: usize,
    pub m2_convergence_tol: f64,
    /// When false every proposed step is taken with α = 1.
    pub step_acceptance: bool,
    pub inner: InnerSolverConfig,
}

impl Default for IrlConfig {
    fn default() -> Self {
        Self {
            window: 1,
            subsamples: 20,
            lambda_l1: 1e-6,
            beta_l2: 1e-2,
            wolfe_c1: 1e-4,
            wolfe_c2: 0.9,
            alpha_shrink: 0.25,
            max_step_trials: 10,
            w_init_value: 0.01,
            weight_upper_bound: None,
            max_outer_iterations: 100,
            m2_convergence_tol: 1e-3,
            step_acceptance: true,
            inner: InnerSolverConfig::default(),
        }
    }
}

impl IrlConfig {
    /// Default configuration with weights confined to `[0, 1]`.
    pub fn bounded() -> Self {
        Self {
            weight_upper_bound: Some(1.0),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if !(0.0 < self.wolfe_c1 && self.wolfe_c1 < self.wolfe_c2 && self.wolfe_c2 < 1.0) {
            return fail("Wolfe constants must satisfy 0 < c1 < c2 < 1");
        }
        if !(0.0 < self.alpha_shrink && self.alpha_shrink < 1.0) {
            return fail("alpha_shrink must lie in (0, 1)");
        }
        if self.window == 0 {
            return fail("window must be at least 1");
        }
        if self.subsamples == 0 {
            return fail("subsamples must be at least 1");
        }
        if self.max_step_trials == 0 {
            return fail("max_step_trials must be at least 1");
        }
        if !(self.lambda_l1 >= 0.0 && self.beta_l2 >= 0.0) {
            return fail("regularization strengths must be nonnegative");
        }
        if !(self.w_init_value > 0.0 && self.w_init_value.is_finite()) {
            return fail("w_init_value must be positive");
        }
        if let Some(ub) = self.weight_upper_bound {
            if !(ub > self.w_init_value) {
                return fail("weight_upper_bound must exceed w_init_value");
            }
        }
        if !(self.m2_convergence_tol >= 0.0) {
            return fail("m2_convergence_tol must be nonnegative");
        }
        if self.inner.max_iterations == 0 || !(self.inner.step_tolerance > 0.0) {
            return fail("inner solver needs a positive iteration budget and tolerance");
        }
        if !(self.inner.box_epsilon >= 0.0 && self.inner.box_epsilon < self.w_init_value) {
            return fail("box_epsilon must lie in [0, w_init_value)");
        }
        Ok(())
    }
}
