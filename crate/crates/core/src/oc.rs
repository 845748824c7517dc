//! Iterative LQR for the point-mass double integrator under a linear feature
//! cost `wᵀΦ(τ)`.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Matrix4x2, Vector2};
use serde::{Deserialize, Serialize};

use crate::domain::{
    trajectory_cost, Control, EnvironmentSpec, FeatureVector, State, Trajectory, WeightVector,
};
use crate::error::{Error, Result};
use crate::featurizer::{feature_derivatives, integrate_features, terminal_feature_derivatives};

const MIN_REGULARIZATION: f64 = 1e-9;
const MAX_REGULARIZATION: f64 = 1e9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Stop once the relative cost decrease falls below this.
    pub cost_tolerance: f64,
    pub initial_regularization: f64,
    pub regularization_growth: f64,
    pub regularization_shrink: f64,
    /// Number of step halvings tried in the forward pass.
    pub line_search_steps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            cost_tolerance: 1e-10,
            initial_regularization: 1e-6,
            regularization_growth: 10.0,
            regularization_shrink: 2.0,
            line_search_steps: 12,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig(
                "max_iterations must be at least 1".into(),
            ));
        }
        if !(self.cost_tolerance > 0.0) || !(self.initial_regularization > 0.0) {
            return Err(Error::InvalidConfig(
                "solver tolerances must be positive".into(),
            ));
        }
        if !(self.regularization_growth > 1.0) || !(self.regularization_shrink > 1.0) {
            return Err(Error::InvalidConfig(
                "regularization factors must exceed 1".into(),
            ));
        }
        if self.line_search_steps == 0 {
            return Err(Error::InvalidConfig(
                "line_search_steps must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub trajectory: Trajectory,
    pub features: FeatureVector,
    pub converged: bool,
    pub final_cost: f64,
    pub iterations_used: usize,
    /// Cost after the initial rollout and after every accepted iteration.
    pub cost_history: Vec<f64>,
}

/// Explicit Euler double integrator: `p' = p + v·dt`, `v' = v + u·dt`.
pub fn step_dynamics(x: &State, u: &Control, dt: f64) -> State {
    State {
        position: x.position + x.velocity * dt,
        velocity: x.velocity + u.force * dt,
    }
}

/// Simulates `controls` from `x0`.
pub fn rollout(x0: &State, controls: &[Control], env: &EnvironmentSpec) -> Result<Trajectory> {
    if controls.len() != env.horizon {
        return Err(Error::HorizonMismatch {
            expected: env.horizon,
            found: controls.len(),
        });
    }
    let mut states = Vec::with_capacity(controls.len() + 1);
    states.push(*x0);
    for u in controls {
        let next = step_dynamics(states.last().unwrap(), u, env.dt);
        states.push(next);
    }
    Trajectory::new(states, controls.to_vec(), env.dt)
}

fn linearization(dt: f64) -> (Matrix4<f64>, Matrix4x2<f64>) {
    let mut a = Matrix4::identity();
    a[(0, 2)] = dt;
    a[(1, 3)] = dt;
    let mut b = Matrix4x2::zeros();
    b[(2, 0)] = dt;
    b[(3, 1)] = dt;
    (a, b)
}

struct Evaluated {
    trajectory: Trajectory,
    features: FeatureVector,
    cost: f64,
}

fn evaluate(trajectory: Trajectory, w: &WeightVector, env: &EnvironmentSpec) -> Result<Evaluated> {
    let features = integrate_features(&trajectory, env)?;
    let cost = trajectory_cost(w, &features)?;
    Ok(Evaluated {
        trajectory,
        features,
        cost,
    })
}

struct Gains {
    k: Vec<Vector2<f64>>,
    gain: Vec<Matrix2x4<f64>>,
    /// Linear and quadratic terms of the predicted cost change at step size α.
    expected: (f64, f64),
}

fn backward_pass(
    nominal: &Trajectory,
    w: &WeightVector,
    env: &EnvironmentSpec,
    mu: f64,
) -> Option<Gains> {
    let layout = env.layout();
    let (stage_w, term_w) = w.as_slice().split_at(layout.terminal_offset());
    let (a, b) = linearization(env.dt);
    let horizon = nominal.horizon();

    let term = terminal_feature_derivatives(nominal.final_state(), env).weighted(term_w, 1.0);
    let mut vx = term.lx;
    let mut vxx = term.lxx;

    let mut k = vec![Vector2::zeros(); horizon];
    let mut gain = vec![Matrix2x4::zeros(); horizon];
    let mut expected = (0.0, 0.0);

    for t in (0..horizon).rev() {
        let x = &nominal.states()[t];
        let u = &nominal.controls()[t];
        let l = feature_derivatives(x, u, env).weighted(stage_w, env.dt);

        let qx = l.lx + a.transpose() * vx;
        let qu = l.lu + b.transpose() * vx;
        let qxx = l.lxx + a.transpose() * vxx * a;
        let qux = b.transpose() * vxx * a;
        let quu = l.luu + b.transpose() * vxx * b;
        let quu_reg = quu + Matrix2::identity() * mu;

        let chol = quu_reg.cholesky()?;
        let kt = -chol.solve(&qu);
        let gt = -chol.solve(&qux);

        expected.0 += kt.dot(&qu);
        expected.1 += 0.5 * kt.dot(&(quu * kt));

        vx = qx + gt.transpose() * quu * kt + gt.transpose() * qu + qux.transpose() * kt;
        vxx = qxx + gt.transpose() * quu * gt + gt.transpose() * qux + qux.transpose() * gt;
        vxx = 0.5 * (vxx + vxx.transpose());

        k[t] = kt;
        gain[t] = gt;
    }
    Some(Gains { k, gain, expected })
}

fn forward_pass(
    nominal: &Trajectory,
    gains: &Gains,
    alpha: f64,
    x0: &State,
    env: &EnvironmentSpec,
) -> Result<Trajectory> {
    let horizon = nominal.horizon();
    let mut states = Vec::with_capacity(horizon + 1);
    let mut controls = Vec::with_capacity(horizon);
    states.push(*x0);
    for t in 0..horizon {
        let x = states[t];
        let dx = x.to_vector() - nominal.states()[t].to_vector();
        let du = gains.k[t] * alpha + gains.gain[t] * dx;
        let u = Control {
            force: nominal.controls()[t].force + du,
        };
        states.push(step_dynamics(&x, &u, env.dt));
        controls.push(u);
    }
    Trajectory::new(states, controls, env.dt)
}

/// Locally optimal trajectory from `x0` for the cost `wᵀΦ`.
///
/// Starts from `warm_start`'s controls when given (re-simulated from `x0`),
/// otherwise from zero controls. Accepted iterates never increase the cost;
/// when the iteration budget runs out the best iterate is returned with
/// `converged = false`.
pub fn solve(
    env: &EnvironmentSpec,
    w: &WeightVector,
    x0: &State,
    warm_start: Option<&Trajectory>,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    cfg.validate()?;
    if w.len() != env.feature_count() {
        return Err(Error::DimensionMismatch {
            expected: env.feature_count(),
            found: w.len(),
        });
    }
    if !w.is_feasible(None) {
        return Err(Error::InvalidConfig(
            "solver weights must be finite and nonnegative".into(),
        ));
    }

    let controls = match warm_start {
        Some(tau) if tau.horizon() == env.horizon => tau.controls().to_vec(),
        Some(tau) => {
            return Err(Error::HorizonMismatch {
                expected: env.horizon,
                found: tau.horizon(),
            })
        }
        None => vec![Control::zero(); env.horizon],
    };
    let mut current = evaluate(rollout(x0, &controls, env)?, w, env)?;
    if !current.cost.is_finite() {
        return Err(Error::NonFinite(format!(
            "initial rollout cost is {}",
            current.cost
        )));
    }

    let mut cost_history = vec![current.cost];
    let mut mu = cfg.initial_regularization;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iterations {
        iterations += 1;
        let Some(gains) = backward_pass(&current.trajectory, w, env, mu) else {
            mu *= cfg.regularization_growth;
            if mu > MAX_REGULARIZATION {
                break;
            }
            continue;
        };

        let scale = current.cost.abs().max(1e-12);
        let predicted = -(gains.expected.0 + gains.expected.1);
        if predicted < cfg.cost_tolerance * scale {
            converged = true;
            break;
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..cfg.line_search_steps {
            let candidate = evaluate(
                forward_pass(&current.trajectory, &gains, alpha, x0, env)?,
                w,
                env,
            )?;
            if !candidate.cost.is_finite() {
                return Err(Error::NonFinite(format!(
                    "forward pass at step {alpha} produced cost {}",
                    candidate.cost
                )));
            }
            if candidate.cost < current.cost {
                accepted = Some(candidate);
                break;
            }
            alpha *= 0.5;
        }

        match accepted {
            Some(next) => {
                let decrease = (current.cost - next.cost) / scale;
                current = next;
                cost_history.push(current.cost);
                mu = (mu / cfg.regularization_shrink).max(MIN_REGULARIZATION);
                if decrease < cfg.cost_tolerance {
                    converged = true;
                    break;
                }
            }
            None => {
                mu *= cfg.regularization_growth;
                if mu > MAX_REGULARIZATION {
                    break;
                }
            }
        }
    }

    Ok(SolveResult {
        final_cost: current.cost,
        trajectory: current.trajectory,
        features: current.features,
        converged,
        iterations_used: iterations,
        cost_history,
    })
}
