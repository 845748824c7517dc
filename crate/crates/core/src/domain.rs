//! Value types shared across the crate and the linear cost / trajectory
//! probability primitives.

use std::fmt;

use nalgebra::{Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Point-mass state: planar position and velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub position: Vector2<f64>,
    pub velocity: Vector2<f64>,
}

impl State {
    pub fn new(position: [f64; 2], velocity: [f64; 2]) -> Self {
        Self {
            position: Vector2::from(position),
            velocity: Vector2::from(velocity),
        }
    }

    pub fn at_rest(position: [f64; 2]) -> Self {
        Self::new(position, [0.0, 0.0])
    }

    /// Stacked `(px, py, vx, vy)`.
    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::new(
            self.position.x,
            self.position.y,
            self.velocity.x,
            self.velocity.y,
        )
    }

    pub fn from_vector(x: &Vector4<f64>) -> Self {
        Self {
            position: Vector2::new(x[0], x[1]),
            velocity: Vector2::new(x[2], x[3]),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position
            .iter()
            .chain(self.velocity.iter())
            .all(|v| v.is_finite())
    }
}

/// Acceleration command applied to the point mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Control {
    pub force: Vector2<f64>,
}

impl Control {
    pub fn new(fx: f64, fy: f64) -> Self {
        Self {
            force: Vector2::new(fx, fy),
        }
    }

    pub fn zero() -> Self {
        Self::new(0.0, 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.force.iter().all(|v| v.is_finite())
    }
}

/// `T + 1` states and `T` controls sampled every `dt` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    states: Vec<State>,
    controls: Vec<Control>,
    dt: f64,
}

impl Trajectory {
    pub fn new(states: Vec<State>, controls: Vec<Control>, dt: f64) -> Result<Self> {
        if states.len() != controls.len() + 1 {
            return Err(Error::DimensionMismatch {
                expected: controls.len() + 1,
                found: states.len(),
            });
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidEnvironment(format!(
                "trajectory dt must be positive, got {dt}"
            )));
        }
        if !states.iter().all(State::is_finite) || !controls.iter().all(Control::is_finite) {
            return Err(Error::NonFinite(
                "trajectory contains non-finite entries".into(),
            ));
        }
        Ok(Self {
            states,
            controls,
            dt,
        })
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn controls(&self) -> &[Control] {
        &self.controls
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of control steps `T`.
    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    pub fn final_state(&self) -> &State {
        self.states.last().expect("trajectory always has a state")
    }

    /// Euclidean norm of the stacked state difference over all time steps.
    pub fn state_deviation(&self, other: &Trajectory) -> Result<f64> {
        if self.states.len() != other.states.len() {
            return Err(Error::DimensionMismatch {
                expected: self.states.len(),
                found: other.states.len(),
            });
        }
        let sq: f64 = self
            .states
            .iter()
            .zip(&other.states)
            .map(|(a, b)| (a.to_vector() - b.to_vector()).norm_squared())
            .sum();
        Ok(sq.sqrt())
    }
}

/// Time-integrated feature values `Φ(τ)`, stage block followed by terminal block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// `self − other`, entry by entry.
    pub fn difference(&self, other: &FeatureVector) -> Result<Vec<f64>> {
        check_len(self.len(), other.len())?;
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }
}

/// Nonnegative cost weights, one per feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector(pub Vec<f64>);

impl WeightVector {
    pub fn filled(len: usize, value: f64) -> Self {
        Self(vec![value; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Checks `w ≥ 0` and, when given, `w ≤ upper`.
    pub fn is_feasible(&self, upper: Option<f64>) -> bool {
        self.0
            .iter()
            .all(|&v| v.is_finite() && v >= 0.0 && upper.is_none_or(|ub| v <= ub))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSpec {
    pub center: Vector2<f64>,
    pub radius: f64,
    /// Distance from the obstacle surface at which the avoidance cost activates.
    pub activation_margin: f64,
}

impl ObstacleSpec {
    pub fn new(center: [f64; 2], radius: f64, activation_margin: f64) -> Self {
        Self {
            center: Vector2::from(center),
            radius,
            activation_margin,
        }
    }

    /// Distance from `p` to the obstacle surface; negative inside.
    pub fn signed_distance(&self, p: &Vector2<f64>) -> f64 {
        (p - self.center).norm() - self.radius
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Stage,
    Terminal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureKind {
    /// Position error to the goal plus velocity magnitude.
    Goal,
    /// Squared norm of the full state.
    StateReg,
    /// Squared norm of the control.
    ControlReg,
    /// Clipped penetration into the activation margin of obstacle `i`.
    Obstacle(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureId {
    pub phase: Phase,
    pub kind: FeatureKind,
}

impl FeatureId {
    /// Short name without phase, e.g. `G`, `UReg`, `Obs_2`.
    pub fn short_name(&self) -> String {
        match self.kind {
            FeatureKind::Goal => "G".into(),
            FeatureKind::StateReg => "XReg".into(),
            FeatureKind::ControlReg => "UReg".into(),
            FeatureKind::Obstacle(i) => format!("Obs_{}", i + 1),
        }
    }
}

impl fmt::Display for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let phase = match self.phase {
            Phase::Stage => "stage",
            Phase::Terminal => "terminal",
        };
        write!(f, "{phase}.{}", self.short_name())
    }
}

/// Ordered feature layout: stage `G, XReg, UReg, Obs_1..Obs_n` then
/// terminal `G, XReg, Obs_1..Obs_n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub n_obstacles: usize,
}

impl FeatureLayout {
    pub fn new(n_obstacles: usize) -> Self {
        Self { n_obstacles }
    }

    pub fn stage_len(&self) -> usize {
        3 + self.n_obstacles
    }

    pub fn terminal_len(&self) -> usize {
        2 + self.n_obstacles
    }

    pub fn len(&self) -> usize {
        self.stage_len() + self.terminal_len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn terminal_offset(&self) -> usize {
        self.stage_len()
    }

    pub fn ids(&self) -> Vec<FeatureId> {
        let obs = |phase| {
            (0..self.n_obstacles).map(move |i| FeatureId {
                phase,
                kind: FeatureKind::Obstacle(i),
            })
        };
        let stage = [
            FeatureKind::Goal,
            FeatureKind::StateReg,
            FeatureKind::ControlReg,
        ]
        .into_iter()
        .map(|kind| FeatureId {
            phase: Phase::Stage,
            kind,
        })
        .chain(obs(Phase::Stage));
        let terminal = [FeatureKind::Goal, FeatureKind::StateReg]
            .into_iter()
            .map(|kind| FeatureId {
                phase: Phase::Terminal,
                kind,
            })
            .chain(obs(Phase::Terminal));
        stage.chain(terminal).collect()
    }

    /// Position of `id` in the full weight/feature vector.
    pub fn index_of(&self, id: FeatureId) -> Option<usize> {
        let n = self.n_obstacles;
        match (id.phase, id.kind) {
            (Phase::Stage, FeatureKind::Goal) => Some(0),
            (Phase::Stage, FeatureKind::StateReg) => Some(1),
            (Phase::Stage, FeatureKind::ControlReg) => Some(2),
            (Phase::Stage, FeatureKind::Obstacle(i)) if i < n => Some(3 + i),
            (Phase::Terminal, FeatureKind::Goal) => Some(self.terminal_offset()),
            (Phase::Terminal, FeatureKind::StateReg) => Some(self.terminal_offset() + 1),
            (Phase::Terminal, FeatureKind::Obstacle(i)) if i < n => {
                Some(self.terminal_offset() + 2 + i)
            }
            _ => None,
        }
    }
}

/// Point-mass task description.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentSpec {
    pub goal: Vector2<f64>,
    pub start: State,
    pub obstacles: Vec<ObstacleSpec>,
    pub horizon: usize,
    pub dt: f64,
}

impl EnvironmentSpec {
    pub fn new(
        goal: [f64; 2],
        start: State,
        obstacles: Vec<ObstacleSpec>,
        horizon: usize,
        dt: f64,
    ) -> Result<Self> {
        let env = Self {
            goal: Vector2::from(goal),
            start,
            obstacles,
            horizon,
            dt,
        };
        env.validate()?;
        Ok(env)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 2 {
            return Err(Error::InvalidEnvironment(format!(
                "horizon_T must be at least 2, got {}",
                self.horizon
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidEnvironment(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !self.start.is_finite() || !self.goal.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidEnvironment(
                "start and goal must be finite".into(),
            ));
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            if !(o.radius > 0.0 && o.radius.is_finite()) {
                return Err(Error::InvalidEnvironment(format!(
                    "obstacle {} radius must be positive",
                    i + 1
                )));
            }
            if !(o.activation_margin > 0.0 && o.activation_margin.is_finite()) {
                return Err(Error::InvalidEnvironment(format!(
                    "obstacle {} margin must be positive",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    pub fn layout(&self) -> FeatureLayout {
        FeatureLayout::new(self.obstacles.len())
    }

    pub fn feature_count(&self) -> usize {
        self.layout().len()
    }

    /// Same task from a different initial state.
    pub fn with_start(&self, start: State) -> Self {
        Self {
            start,
            ..self.clone()
        }
    }
}

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `log Σ exp(v)` with the maximum factored out. Returns `-inf` for an empty slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Linear trajectory cost `wᵀΦ`.
pub fn trajectory_cost(w: &WeightVector, phi: &FeatureVector) -> Result<f64> {
    check_len(w.len(), phi.len())?;
    Ok(dot(&w.0, &phi.0))
}

/// Probability of the demonstration under the maximum-entropy model whose
/// partition function is made of the demonstration and `others`.
pub fn demo_probability(
    w: &WeightVector,
    phi_star: &FeatureVector,
    others: &[FeatureVector],
) -> Result<f64> {
    if w.is_empty() {
        return Err(Error::EmptyWeights);
    }
    let demo = -trajectory_cost(w, phi_star)?;
    let mut exponents = Vec::with_capacity(others.len() + 1);
    exponents.push(demo);
    for phi in others {
        exponents.push(-trajectory_cost(w, phi)?);
    }
    let max = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = exponents.iter().map(|e| (e - max).exp()).sum();
    Ok((demo - max).exp() / z)
}
