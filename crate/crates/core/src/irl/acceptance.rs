//! Merit functions and the backtracking step-acceptance procedure.

use serde::{Deserialize, Serialize};

use crate::domain::{
    check_len, dot, EnvironmentSpec, FeatureVector, State, Trajectory, WeightVector,
};
use crate::error::Result;
use crate::irl::config::IrlConfig;
use crate::oc::{self, SolverConfig};

/// `½(wᵀΦ* − wᵀΦ̃)²`.
pub fn merit_m1(
    w: &WeightVector,
    phi_star: &FeatureVector,
    phi_tilde: &FeatureVector,
) -> Result<f64> {
    check_len(w.len(), phi_star.len())?;
    let gap = dot(w.as_slice(), &phi_star.difference(phi_tilde)?);
    Ok(0.5 * gap * gap)
}

/// `‖Φ* − Φ̃‖₂`.
pub fn merit_m2(phi_star: &FeatureVector, phi_tilde: &FeatureVector) -> Result<f64> {
    let diff = phi_star.difference(phi_tilde)?;
    Ok(dot(&diff, &diff).sqrt())
}

/// A trajectory produced by the optimizer together with its features.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub trajectory: Trajectory,
    pub features: FeatureVector,
}

/// Maps a weight vector to a (locally) optimal trajectory.
pub trait TrajectoryOracle {
    fn solve(&self, w: &WeightVector, warm_start: Option<&Trajectory>) -> Result<Sample>;
}

/// iLQR on a fixed environment and initial state.
#[derive(Debug, Clone)]
pub struct SolverOracle<'a> {
    pub env: &'a EnvironmentSpec,
    pub start: State,
    pub config: &'a SolverConfig,
}

impl<'a> SolverOracle<'a> {
    pub fn new(env: &'a EnvironmentSpec, config: &'a SolverConfig) -> Self {
        Self {
            env,
            start: env.start,
            config,
        }
    }
}

impl TrajectoryOracle for SolverOracle<'_> {
    fn solve(&self, w: &WeightVector, warm_start: Option<&Trajectory>) -> Result<Sample> {
        let res = oc::solve(self.env, w, &self.start, warm_start, self.config)?;
        Ok(Sample {
            trajectory: res.trajectory,
            features: res.features,
        })
    }
}

/// Merit values and trajectory of the last accepted iterate.
#[derive(Debug, Clone)]
pub struct AcceptedState {
    pub m1: f64,
    pub m2: f64,
    pub sample: Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcceptedVia {
    /// Armijo and curvature conditions on m1.
    Wolfe,
    /// Strict decrease of m2.
    FeatureMerit,
    /// Step acceptance disabled.
    Unconditional,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub accepted: bool,
    pub new_w: WeightVector,
    pub sample: Option<Sample>,
    pub m1: f64,
    pub m2: f64,
    pub alpha: f64,
    pub trials: usize,
    pub via: Option<AcceptedVia>,
}

fn candidate(w: &WeightVector, dw: &[f64], alpha: f64) -> WeightVector {
    WeightVector(
        w.as_slice()
            .iter()
            .zip(dw)
            .map(|(wi, di)| wi + alpha * di)
            .collect(),
    )
}

/// Backtracking search over `α ∈ {1, s, s², …}` for a step `w + α·dw` whose
/// freshly solved trajectory improves either merit.
///
/// The m1 derivative treats the optimizer's trajectory as fixed at the
/// previously accepted one, so with `D = Φ* − Φ̃_prev`
/// `g(α) = (w_αᵀD)(dwᵀD)`. The Wolfe branch is only available when
/// `g(0) < 0`.
pub fn accept_step(
    w: &WeightVector,
    dw: &[f64],
    phi_star: &FeatureVector,
    prev: &AcceptedState,
    oracle: &dyn TrajectoryOracle,
    cfg: &IrlConfig,
) -> Result<StepOutcome> {
    check_len(w.len(), dw.len())?;
    let d_prev = phi_star.difference(&prev.sample.features)?;
    let gap0 = dot(w.as_slice(), &d_prev);
    let slope = dot(dw, &d_prev);
    let g0 = gap0 * slope;
    // m1 at the current weights; equals the last accepted M1 after the first step
    let m1_0 = 0.5 * gap0 * gap0;

    let mut alpha = 1.0;
    let mut last = (f64::NAN, f64::NAN);
    for trial in 1..=cfg.max_step_trials {
        let w_c = candidate(w, dw, alpha);
        if let Ok(sample) = oracle.solve(&w_c, Some(&prev.sample.trajectory)) {
            let m1 = merit_m1(&w_c, phi_star, &sample.features)?;
            let m2 = merit_m2(phi_star, &sample.features)?;
            last = (m1, m2);

            let wolfe = g0 < 0.0 && {
                let armijo = m1 <= m1_0 + cfg.wolfe_c1 * alpha * g0;
                let g_alpha = (gap0 + alpha * slope) * slope;
                armijo && g_alpha.abs() <= cfg.wolfe_c2 * g0.abs()
            };
            let via = if wolfe {
                Some(AcceptedVia::Wolfe)
            } else if m2 < prev.m2 {
                Some(AcceptedVia::FeatureMerit)
            } else {
                None
            };
            if via.is_some() {
                return Ok(StepOutcome {
                    accepted: true,
                    new_w: w_c,
                    sample: Some(sample),
                    m1,
                    m2,
                    alpha,
                    trials: trial,
                    via,
                });
            }
        }
        alpha *= cfg.alpha_shrink;
    }
    Ok(StepOutcome {
        accepted: false,
        new_w: w.clone(),
        sample: None,
        m1: last.0,
        m2: last.1,
        alpha: alpha / cfg.alpha_shrink,
        trials: cfg.max_step_trials,
        via: None,
    })
}

/// Takes the full step without validation. A solver failure is reported as
/// a rejected step.
pub fn take_full_step(
    w: &WeightVector,
    dw: &[f64],
    phi_star: &FeatureVector,
    prev: &AcceptedState,
    oracle: &dyn TrajectoryOracle,
) -> Result<StepOutcome> {
    check_len(w.len(), dw.len())?;
    let w_c = candidate(w, dw, 1.0);
    let Ok(sample) = oracle.solve(&w_c, Some(&prev.sample.trajectory)) else {
        return Ok(StepOutcome {
            accepted: false,
            new_w: w.clone(),
            sample: None,
            m1: f64::NAN,
            m2: f64::NAN,
            alpha: 1.0,
            trials: 1,
            via: None,
        });
    };
    let m1 = merit_m1(&w_c, phi_star, &sample.features)?;
    let m2 = merit_m2(phi_star, &sample.features)?;
    Ok(StepOutcome {
        accepted: true,
        new_w: w_c,
        sample: Some(sample),
        m1,
        m2,
        alpha: 1.0,
        trials: 1,
        via: Some(AcceptedVia::Unconditional),
    })
}
