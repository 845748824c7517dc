//! Point-mass benchmark presets, demonstration generation, generalization
//! evaluation and the ablation study.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::domain::{
    trajectory_cost, EnvironmentSpec, FeatureKind, State, Trajectory, WeightVector,
};
use crate::error::{Error, Result};
use crate::featurizer::integrate_features;
use crate::io::EnvironmentFile;
use crate::irl::{self, IrlConfig, IrlResult, IterationRecord, TerminationReason};
use crate::oc::{self, SolverConfig};

pub const DEFAULT_GOAL_TOLERANCE: f64 = 0.05;

pub const PRESET_NAMES: [&str; 3] = ["pm1", "pm2", "pm3"];

const PM1: &str = include_str!("../presets/pm1.toml");
const PM2: &str = include_str!("../presets/pm2.toml");
const PM3: &str = include_str!("../presets/pm3.toml");

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPreset {
    pub name: String,
    pub environment: EnvironmentSpec,
    pub ground_truth_weights: WeightVector,
    pub alternative_starts: Vec<State>,
    pub goal_tolerance: f64,
}

impl ExperimentPreset {
    /// Builds a preset from a parsed environment file. Truth weights are required.
    pub fn from_file(file: &EnvironmentFile, fallback_name: &str) -> Result<Self> {
        let environment = file.environment()?;
        let ground_truth_weights = file.weights(environment.layout())?.ok_or_else(|| {
            Error::InvalidConfig("missing `weights` table with ground-truth weights".into())
        })?;
        let preset = Self {
            name: file
                .name
                .clone()
                .unwrap_or_else(|| fallback_name.to_string()),
            alternative_starts: file
                .alternative_starts
                .iter()
                .map(|&p| State::at_rest(p))
                .collect(),
            goal_tolerance: file.goal_tolerance.unwrap_or(DEFAULT_GOAL_TOLERANCE),
            environment,
            ground_truth_weights,
        };
        preset.validate()?;
        Ok(preset)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = EnvironmentFile::load(path)?;
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("custom");
        Self::from_file(&file, stem)
    }

    pub fn validate(&self) -> Result<()> {
        let env = &self.environment;
        env.validate()?;
        let w = &self.ground_truth_weights;
        if w.len() != env.feature_count() {
            return Err(Error::DimensionMismatch {
                expected: env.feature_count(),
                found: w.len(),
            });
        }
        if !w.is_feasible(None) {
            return Err(Error::InvalidConfig(
                "ground-truth weights must be nonnegative".into(),
            ));
        }
        for (id, &v) in env.layout().ids().iter().zip(w.as_slice()) {
            let required = matches!(id.kind, FeatureKind::Goal | FeatureKind::Obstacle(_));
            if required && v <= 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "ground-truth weight {id} must be strictly positive"
                )));
            }
        }
        for (i, s) in self.alternative_starts.iter().enumerate() {
            if env
                .obstacles
                .iter()
                .any(|o| o.signed_distance(&s.position) < 0.0)
            {
                return Err(Error::InvalidConfig(format!(
                    "alternative start {} lies inside an obstacle",
                    i + 1
                )));
            }
        }
        if !(self.goal_tolerance > 0.0) {
            return Err(Error::InvalidConfig(
                "goal_tolerance must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Built-in presets. `pm1`: one obstacle, 1.5 s; `pm2`: four obstacles,
/// 2.5 s; `pm3`: five obstacles, 2.5 s.
pub fn make_preset(name: &str) -> Result<ExperimentPreset> {
    let text = match name {
        "pm1" => PM1,
        "pm2" => PM2,
        "pm3" => PM3,
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    let origin = format!("<builtin {name}>");
    ExperimentPreset::from_file(&EnvironmentFile::parse(text, Path::new(&origin))?, name)
}

/// Source text of a built-in preset file.
pub fn preset_source(name: &str) -> Result<&'static str> {
    match name {
        "pm1" => Ok(PM1),
        "pm2" => Ok(PM2),
        "pm3" => Ok(PM3),
        other => Err(Error::UnknownPreset(other.to_string())),
    }
}

/// True iff the closed segment `a`–`b` meets the open disk of any obstacle.
pub fn segment_hits_obstacle(a: [f64; 2], b: [f64; 2], env: &EnvironmentSpec) -> bool {
    let (ax, ay, dx, dy) = (a[0], a[1], b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    env.obstacles.iter().any(|o| {
        let (cx, cy) = (o.center.x, o.center.y);
        let t = if len2 > 0.0 {
            (((cx - ax) * dx + (cy - ay) * dy) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let (px, py) = (ax + t * dx - cx, ay + t * dy - cy);
        (px * px + py * py).sqrt() < o.radius
    })
}

/// True iff some state lies strictly inside some obstacle disk.
pub fn collision_check(tau: &Trajectory, env: &EnvironmentSpec) -> bool {
    tau.states().iter().any(|s| {
        env.obstacles
            .iter()
            .any(|o| (s.position - o.center).norm() < o.radius)
    })
}

pub fn terminal_distance(tau: &Trajectory, env: &EnvironmentSpec) -> f64 {
    (tau.final_state().position - env.goal).norm()
}

/// Solves under the ground-truth weights and checks the demonstration
/// reaches the goal without collision.
pub fn generate_demonstration(
    preset: &ExperimentPreset,
    oc_cfg: &SolverConfig,
) -> Result<Trajectory> {
    preset.validate()?;
    let env = &preset.environment;
    let solved = oc::solve(env, &preset.ground_truth_weights, &env.start, None, oc_cfg)?;
    let tau = solved.trajectory;
    let dist = terminal_distance(&tau, env);
    if dist > preset.goal_tolerance {
        return Err(Error::Predicate(format!(
            "preset {} demonstration ends {dist:.4} m from the goal (tolerance {})",
            preset.name, preset.goal_tolerance
        )));
    }
    if collision_check(&tau, env) {
        return Err(Error::Predicate(format!(
            "preset {} demonstration collides with an obstacle",
            preset.name
        )));
    }
    Ok(tau)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartOutcome {
    pub label: String,
    pub start: [f64; 2],
    pub solver_ok: bool,
    pub reached_goal: bool,
    pub collided: bool,
    pub terminal_distance: Option<f64>,
    pub cost_under_w_star: Option<f64>,
    pub cost_under_learned_w: Option<f64>,
}

impl StartOutcome {
    pub fn success(&self) -> bool {
        self.solver_ok && self.reached_goal && !self.collided
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub preset: String,
    pub learned_weights: Vec<f64>,
    pub demo_cost_under_w_star: f64,
    pub original: StartOutcome,
    pub alternatives: Vec<StartOutcome>,
    /// `w*ᵀΦ(learned) / w*ᵀΦ*` from the original start; `None` if that solve failed.
    pub cost_ratio: Option<f64>,
    pub alternative_successes: usize,
    pub wallclock_s: f64,
}

impl EvaluationReport {
    pub fn rows(&self) -> impl Iterator<Item = &StartOutcome> {
        std::iter::once(&self.original).chain(&self.alternatives)
    }

    /// Plain-text table for terminals.
    pub fn table(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.6e}"));
        let mut out = format!(
            "{:<10} {:>16} {:>16} {:>10} {:>8} {:>9}\n",
            "start", "cost_w_star", "cost_learned_w", "dist_goal", "reached", "collided"
        );
        for r in self.rows() {
            out.push_str(&format!(
                "{:<10} {:>16} {:>16} {:>10} {:>8} {:>9}\n",
                r.label,
                opt(r.cost_under_w_star),
                opt(r.cost_under_learned_w),
                opt(r.terminal_distance),
                r.reached_goal,
                r.collided
            ));
        }
        out.push_str(&format!(
            "demo cost under w*: {:.6e}\ncost ratio: {}\nalternative starts succeeded: {}/{}\n",
            self.demo_cost_under_w_star,
            opt(self.cost_ratio),
            self.alternative_successes,
            self.alternatives.len()
        ));
        out
    }
}

fn evaluate_start(
    label: String,
    start: &State,
    w: &WeightVector,
    preset: &ExperimentPreset,
    oc_cfg: &SolverConfig,
) -> StartOutcome {
    let env = preset.environment.with_start(*start);
    let mut outcome = StartOutcome {
        label,
        start: [start.position.x, start.position.y],
        solver_ok: false,
        reached_goal: false,
        collided: false,
        terminal_distance: None,
        cost_under_w_star: None,
        cost_under_learned_w: None,
    };
    let Ok(solved) = oc::solve(&env, w, start, None, oc_cfg) else {
        return outcome;
    };
    let (Ok(star), Ok(learned)) = (
        trajectory_cost(&preset.ground_truth_weights, &solved.features),
        trajectory_cost(w, &solved.features),
    ) else {
        return outcome;
    };
    if !(star.is_finite() && learned.is_finite()) {
        return outcome;
    }
    let dist = terminal_distance(&solved.trajectory, &env);
    outcome.solver_ok = true;
    outcome.terminal_distance = Some(dist);
    outcome.reached_goal = dist <= preset.goal_tolerance;
    outcome.collided = collision_check(&solved.trajectory, &env);
    outcome.cost_under_w_star = Some(star);
    outcome.cost_under_learned_w = Some(learned);
    outcome
}

/// Rolls out the learned weights from the original and every alternative start.
pub fn evaluate_generalization(
    w_learned: &WeightVector,
    preset: &ExperimentPreset,
    oc_cfg: &SolverConfig,
) -> Result<EvaluationReport> {
    let started = Instant::now();
    let env = &preset.environment;
    if w_learned.len() != env.feature_count() {
        return Err(Error::DimensionMismatch {
            expected: env.feature_count(),
            found: w_learned.len(),
        });
    }
    if !w_learned.is_feasible(None) {
        return Err(Error::InvalidConfig(
            "learned weights must be finite and nonnegative".into(),
        ));
    }
    let demo = generate_demonstration(preset, oc_cfg)?;
    let demo_cost = trajectory_cost(
        &preset.ground_truth_weights,
        &integrate_features(&demo, env)?,
    )?;

    let original = evaluate_start("original".into(), &env.start, w_learned, preset, oc_cfg);
    let alternatives: Vec<StartOutcome> = preset
        .alternative_starts
        .iter()
        .enumerate()
        .map(|(i, s)| evaluate_start(format!("alt_{}", i + 1), s, w_learned, preset, oc_cfg))
        .collect();
    let cost_ratio = original.cost_under_w_star.map(|c| c / demo_cost);
    Ok(EvaluationReport {
        preset: preset.name.clone(),
        learned_weights: w_learned.0.clone(),
        demo_cost_under_w_star: demo_cost,
        alternative_successes: alternatives.iter().filter(|o| o.success()).count(),
        original,
        alternatives,
        cost_ratio,
        wallclock_s: started.elapsed().as_secs_f64(),
    })
}

/// Which of the three improvements are switched on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationToggles {
    pub step_acceptance: bool,
    pub regularization: bool,
    pub subsampling: bool,
}

impl AblationToggles {
    pub const ALL: Self = Self {
        step_acceptance: true,
        regularization: true,
        subsampling: true,
    };

    /// The five variants in order a–e.
    pub fn variants() -> [(char, Self); 5] {
        let t = |step_acceptance, regularization, subsampling| Self {
            step_acceptance,
            regularization,
            subsampling,
        };
        [
            ('a', t(false, false, false)),
            ('b', t(false, false, true)),
            ('c', t(true, false, true)),
            ('d', t(false, true, true)),
            ('e', t(true, true, true)),
        ]
    }

    /// Applies the toggles on top of `base`. Disabled pieces fall back to
    /// `λ = β = 0`, `N = 1` and unconditional unit steps.
    pub fn apply(&self, base: &IrlConfig) -> IrlConfig {
        let mut cfg = base.clone();
        cfg.step_acceptance = self.step_acceptance;
        if !self.regularization {
            cfg.lambda_l1 = 0.0;
            cfg.beta_l2 = 0.0;
        }
        if !self.subsampling {
            cfg.subsamples = 1;
        }
        cfg
    }
}

#[derive(Debug, Clone)]
pub struct AblationOutcome {
    pub label: char,
    pub toggles: AblationToggles,
    pub config: IrlConfig,
    pub result: IrlResult,
    pub report: EvaluationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSummaryRow {
    pub label: String,
    pub toggles: AblationToggles,
    pub final_m2: f64,
    pub outer_iterations: usize,
    pub termination: TerminationReason,
    pub cost_ratio: Option<f64>,
    pub original_success: bool,
    pub alternative_successes: usize,
}

impl AblationOutcome {
    pub fn summary(&self) -> AblationSummaryRow {
        AblationSummaryRow {
            label: self.label.to_string(),
            toggles: self.toggles,
            final_m2: self.result.final_m2(),
            outer_iterations: self.result.outer_iterations,
            termination: self.result.termination,
            cost_ratio: self.report.cost_ratio,
            original_success: self.report.original.success(),
            alternative_successes: self.report.alternative_successes,
        }
    }

    pub fn metrics(&self) -> &[IterationRecord] {
        &self.result.iteration_log
    }
}

/// Runs the learner once per variant a–e on the preset's demonstration and
/// evaluates each result. Intended for presets with several obstacles.
pub fn run_ablation(
    preset: &ExperimentPreset,
    cfg_base: &IrlConfig,
    oc_cfg: &SolverConfig,
) -> Result<Vec<AblationOutcome>> {
    let demo = generate_demonstration(preset, oc_cfg)?;
    run_ablation_on(preset, &demo, cfg_base, oc_cfg)
}

/// As [`run_ablation`] with a given demonstration.
pub fn run_ablation_on(
    preset: &ExperimentPreset,
    demo: &Trajectory,
    cfg_base: &IrlConfig,
    oc_cfg: &SolverConfig,
) -> Result<Vec<AblationOutcome>> {
    AblationToggles::variants()
        .into_iter()
        .map(|(label, toggles)| {
            let config = toggles.apply(cfg_base);
            let result = irl::run(
                demo,
                &preset.environment,
                &config,
                oc_cfg,
                Some(&preset.ground_truth_weights),
            )?;
            let report = evaluate_generalization(&result.final_weights, preset, oc_cfg)?;
            Ok(AblationOutcome {
                label,
                toggles,
                config,
                result,
                report,
            })
        })
        .collect()
}

/// Summary rows sorted by final m2, ties broken by label.
pub fn rank_by_m2(outcomes: &[AblationOutcome]) -> Vec<AblationSummaryRow> {
    let mut rows: Vec<AblationSummaryRow> = outcomes.iter().map(AblationOutcome::summary).collect();
    rows.sort_by(|a, b| {
        a.final_m2
            .total_cmp(&b.final_m2)
            .then_with(|| a.label.cmp(&b.label))
    });
    rows
}

/// Learns weights for a preset from its own demonstration.
pub fn learn_preset(
    preset: &ExperimentPreset,
    cfg: &IrlConfig,
    oc_cfg: &SolverConfig,
) -> Result<(Trajectory, IrlResult)> {
    let demo = generate_demonstration(preset, oc_cfg)?;
    let result = irl::run(
        &demo,
        &preset.environment,
        cfg,
        oc_cfg,
        Some(&preset.ground_truth_weights),
    )?;
    Ok((demo, result))
}
