//! Point-mass cost features, their time integration (full and suffix-truncated),
//! the sub-sampling grid and the analytic derivatives used by the trajectory
//! optimizer.

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};

use crate::domain::{Control, EnvironmentSpec, FeatureVector, ObstacleSpec, State, Trajectory};
use crate::error::{Error, Result};

/// `max(0, l − signed_distance)`; the obstacle feature is its square.
fn penetration(obstacle: &ObstacleSpec, p: &Vector2<f64>) -> f64 {
    (obstacle.activation_margin - obstacle.signed_distance(p)).max(0.0)
}

fn goal_feature(x: &State, env: &EnvironmentSpec) -> f64 {
    (x.position - env.goal).norm_squared() + x.velocity.norm_squared()
}

/// Stage features in layout order: `G, XReg, UReg, Obs_1..Obs_n`.
pub fn stage_features(x: &State, u: &Control, env: &EnvironmentSpec) -> Vec<f64> {
    let mut out = Vec::with_capacity(3 + env.obstacles.len());
    out.push(goal_feature(x, env));
    out.push(x.to_vector().norm_squared());
    out.push(u.force.norm_squared());
    out.extend(
        env.obstacles
            .iter()
            .map(|o| penetration(o, &x.position).powi(2)),
    );
    out
}

/// Terminal features in layout order: `G, XReg, Obs_1..Obs_n`.
pub fn terminal_features(x: &State, env: &EnvironmentSpec) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 + env.obstacles.len());
    out.push(goal_feature(x, env));
    out.push(x.to_vector().norm_squared());
    out.extend(
        env.obstacles
            .iter()
            .map(|o| penetration(o, &x.position).powi(2)),
    );
    out
}

/// `Φ = Σ_t φ_s(x_t, u_t)·dt + φ_T(x_T)`.
pub fn integrate_features(tau: &Trajectory, env: &EnvironmentSpec) -> Result<FeatureVector> {
    truncated_features(tau, 0, env)
}

/// Features of the suffix starting at step `d`: stage terms for `t = d..T−1`
/// plus the terminal term.
pub fn truncated_features(
    tau: &Trajectory,
    d: usize,
    env: &EnvironmentSpec,
) -> Result<FeatureVector> {
    if tau.horizon() != env.horizon {
        return Err(Error::HorizonMismatch {
            expected: env.horizon,
            found: tau.horizon(),
        });
    }
    let horizon = tau.horizon();
    if d > horizon {
        return Err(Error::IndexOutOfRange {
            index: d,
            max: horizon,
        });
    }
    let layout = env.layout();
    let mut phi = vec![0.0; layout.len()];
    let dt = tau.dt();
    for (x, u) in tau.states()[d..horizon].iter().zip(&tau.controls()[d..]) {
        for (acc, f) in phi.iter_mut().zip(stage_features(x, u, env)) {
            *acc += f * dt;
        }
    }
    let terminal = terminal_features(tau.final_state(), env);
    phi[layout.terminal_offset()..].copy_from_slice(&terminal);
    Ok(FeatureVector(phi))
}

/// Truncation starts `round(k·T/N)` for `k = 0..N`.
pub fn subsample_grid(horizon: usize, n: usize) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::InvalidConfig(
            "sub-sample count must be at least 1".into(),
        ));
    }
    if n > horizon {
        return Err(Error::InvalidConfig(format!(
            "sub-sample count {n} exceeds horizon {horizon}"
        )));
    }
    Ok((0..n)
        .map(|k| ((k * horizon) as f64 / n as f64).round() as usize)
        .collect())
}

/// Likelihood scale `θ_d = (T − d + 1)/(T + 1)` of the suffix starting at `d`.
pub fn theta_coefficient(d: usize, horizon: usize) -> f64 {
    (horizon as f64 - d as f64 + 1.0) / (horizon as f64 + 1.0)
}

/// Per-feature gradients and Gauss-Newton Hessians with respect to the
/// stacked state `(px, py, vx, vy)` and the control.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDerivatives {
    pub gradient_x: Vec<Vector4<f64>>,
    pub gradient_u: Vec<Vector2<f64>>,
    pub hessian_xx: Vec<Matrix4<f64>>,
    pub hessian_uu: Vec<Matrix2<f64>>,
}

/// Weighted sum of feature derivatives: the local quadratic model of a cost term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticModel {
    pub lx: Vector4<f64>,
    pub lu: Vector2<f64>,
    pub lxx: Matrix4<f64>,
    pub luu: Matrix2<f64>,
}

impl FeatureDerivatives {
    fn with_capacity(n: usize) -> Self {
        Self {
            gradient_x: Vec::with_capacity(n),
            gradient_u: Vec::with_capacity(n),
            hessian_xx: Vec::with_capacity(n),
            hessian_uu: Vec::with_capacity(n),
        }
    }

    fn push(&mut self, gx: Vector4<f64>, gu: Vector2<f64>, hxx: Matrix4<f64>, huu: Matrix2<f64>) {
        self.gradient_x.push(gx);
        self.gradient_u.push(gu);
        self.hessian_xx.push(hxx);
        self.hessian_uu.push(huu);
    }

    pub fn len(&self) -> usize {
        self.gradient_x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gradient_x.is_empty()
    }

    /// Contracts the per-feature derivatives with `weights`, scaled by `scale`.
    pub fn weighted(&self, weights: &[f64], scale: f64) -> QuadraticModel {
        let mut m = QuadraticModel {
            lx: Vector4::zeros(),
            lu: Vector2::zeros(),
            lxx: Matrix4::zeros(),
            luu: Matrix2::zeros(),
        };
        for (k, &w) in weights.iter().enumerate().take(self.len()) {
            if w == 0.0 {
                continue;
            }
            let s = w * scale;
            m.lx += self.gradient_x[k] * s;
            m.lu += self.gradient_u[k] * s;
            m.lxx += self.hessian_xx[k] * s;
            m.luu += self.hessian_uu[k] * s;
        }
        m
    }
}

fn common_derivatives(
    x: &State,
    env: &EnvironmentSpec,
    with_control: Option<&Control>,
) -> FeatureDerivatives {
    let n_obs = env.obstacles.len();
    let mut d = FeatureDerivatives::with_capacity(3 + n_obs);
    let two_i4 = Matrix4::identity() * 2.0;

    let err = x.position - env.goal;
    let g_goal = Vector4::new(
        2.0 * err.x,
        2.0 * err.y,
        2.0 * x.velocity.x,
        2.0 * x.velocity.y,
    );
    d.push(g_goal, Vector2::zeros(), two_i4, Matrix2::zeros());
    d.push(
        x.to_vector() * 2.0,
        Vector2::zeros(),
        two_i4,
        Matrix2::zeros(),
    );
    if let Some(u) = with_control {
        d.push(
            Vector4::zeros(),
            u.force * 2.0,
            Matrix4::zeros(),
            Matrix2::identity() * 2.0,
        );
    }

    for o in &env.obstacles {
        let s = penetration(o, &x.position);
        let offset = x.position - o.center;
        let dist = offset.norm();
        if s <= 0.0 || dist == 0.0 {
            // outside the margin, or at the center where the direction is undefined
            d.push(
                Vector4::zeros(),
                Vector2::zeros(),
                Matrix4::zeros(),
                Matrix2::zeros(),
            );
            continue;
        }
        // ∂s/∂p = −n with n the outward unit normal
        let n = offset / dist;
        let mut gx = Vector4::zeros();
        gx.fixed_rows_mut::<2>(0).copy_from(&(-2.0 * s * n));
        let mut hxx = Matrix4::zeros();
        hxx.fixed_view_mut::<2, 2>(0, 0)
            .copy_from(&(2.0 * n * n.transpose()));
        d.push(gx, Vector2::zeros(), hxx, Matrix2::zeros());
    }
    d
}

/// Derivatives of the stage features at `(x, u)`.
pub fn feature_derivatives(x: &State, u: &Control, env: &EnvironmentSpec) -> FeatureDerivatives {
    common_derivatives(x, env, Some(u))
}

/// Derivatives of the terminal features at `x`; control gradients are zero.
pub fn terminal_feature_derivatives(x: &State, env: &EnvironmentSpec) -> FeatureDerivatives {
    common_derivatives(x, env, None)
}
