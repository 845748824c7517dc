use std::collections::VecDeque;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::domain::{trajectory_cost, EnvironmentSpec, FeatureVector, Trajectory, WeightVector};
use crate::error::{Error, Result};
use crate::featurizer::integrate_features;
use crate::irl::acceptance::{
    accept_step, merit_m1, merit_m2, take_full_step, AcceptedState, AcceptedVia, Sample,
    SolverOracle, TrajectoryOracle,
};
use crate::irl::config::IrlConfig;
use crate::irl::dataset::IrlDataset;
use crate::irl::objective::solve_step_direction;
use crate::oc::SolverConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    StepSearchExhausted,
    M2BelowTol,
    MaxIterations,
}

impl std::fmt::Display for TerminationReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TerminationReason::StepSearchExhausted => "step_search_exhausted",
            TerminationReason::M2BelowTol => "m2_below_tol",
            TerminationReason::MaxIterations => "max_iterations",
        })
    }
}

/// Metrics of one accepted iterate. Iteration 0 is the initial solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub weights: WeightVector,
    pub alpha: f64,
    pub trials: usize,
    pub via: Option<AcceptedVia>,
    pub m1: f64,
    pub m2: f64,
    /// Stacked state distance between the sampled trajectory and the demonstration.
    pub trajectory_deviation: f64,
    /// `|wᵀΦ* − wᵀΦ̃|` under the current weights.
    pub cost_gap_learned: f64,
    /// `|w*ᵀΦ* − w*ᵀΦ̃|` when ground-truth weights are known.
    pub cost_gap_true: Option<f64>,
    pub wallclock_s: f64,
}

#[derive(Debug, Clone)]
pub struct IrlResult {
    pub final_weights: WeightVector,
    pub final_sample: Sample,
    pub iteration_log: Vec<IterationRecord>,
    pub termination: TerminationReason,
    /// Number of step directions computed.
    pub outer_iterations: usize,
    /// Every accepted sample, in order, starting with the initial solve.
    pub samples: Vec<Trajectory>,
}

impl IrlResult {
    pub fn final_m2(&self) -> f64 {
        self.iteration_log.last().map_or(f64::NAN, |r| r.m2)
    }
}

struct Recorder<'a> {
    demo: &'a Trajectory,
    phi_star: &'a FeatureVector,
    truth: Option<&'a WeightVector>,
    started: Instant,
}

impl Recorder<'_> {
    fn record(
        &self,
        iteration: usize,
        w: &WeightVector,
        sample: &Sample,
        step: Option<(f64, usize, Option<AcceptedVia>)>,
    ) -> Result<IterationRecord> {
        let (alpha, trials, via) = step.unwrap_or((0.0, 0, None));
        let gap = |weights: &WeightVector| -> Result<f64> {
            Ok((trajectory_cost(weights, self.phi_star)?
                - trajectory_cost(weights, &sample.features)?)
            .abs())
        };
        Ok(IterationRecord {
            iteration,
            weights: w.clone(),
            alpha,
            trials,
            via,
            m1: merit_m1(w, self.phi_star, &sample.features)?,
            m2: merit_m2(self.phi_star, &sample.features)?,
            trajectory_deviation: sample.trajectory.state_deviation(self.demo)?,
            cost_gap_learned: gap(w)?,
            cost_gap_true: self.truth.map(gap).transpose()?,
            wallclock_s: self.started.elapsed().as_secs_f64(),
        })
    }
}

/// Runs the learner with the iLQR solver as trajectory oracle.
pub fn run(
    demo: &Trajectory,
    env: &EnvironmentSpec,
    cfg: &IrlConfig,
    oc_cfg: &SolverConfig,
    truth: Option<&WeightVector>,
) -> Result<IrlResult> {
    let oracle = SolverOracle::new(env, oc_cfg);
    run_with_oracle(demo, env, cfg, &oracle, truth)
}

/// The outer loop: sample, fit a step direction on the recent window,
/// validate the step with fresh solves, repeat.
pub fn run_with_oracle(
    demo: &Trajectory,
    env: &EnvironmentSpec,
    cfg: &IrlConfig,
    oracle: &dyn TrajectoryOracle,
    truth: Option<&WeightVector>,
) -> Result<IrlResult> {
    run_observed(demo, env, cfg, oracle, truth, &mut |_| {})
}

/// As [`run_with_oracle`], handing every logged iterate to `observer` as
/// soon as it is accepted, so callers keep progress if a later step fails.
pub fn run_observed(
    demo: &Trajectory,
    env: &EnvironmentSpec,
    cfg: &IrlConfig,
    oracle: &dyn TrajectoryOracle,
    truth: Option<&WeightVector>,
    observer: &mut dyn FnMut(&IterationRecord),
) -> Result<IrlResult> {
    cfg.validate()?;
    env.validate()?;
    let k = env.feature_count();
    if let Some(t) = truth {
        if t.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: t.len(),
            });
        }
    }
    let phi_star = integrate_features(demo, env)?;
    let recorder = Recorder {
        demo,
        phi_star: &phi_star,
        truth,
        started: Instant::now(),
    };

    let mut w = WeightVector::filled(k, cfg.w_init_value);
    let initial = oracle.solve(&w, None)?;
    let mut log = vec![recorder.record(0, &w, &initial, None)?];
    observer(&log[0]);
    let mut samples = vec![initial.trajectory.clone()];
    let mut window: VecDeque<Trajectory> = VecDeque::from([initial.trajectory.clone()]);
    let mut accepted = AcceptedState {
        m1: f64::INFINITY,
        m2: f64::INFINITY,
        sample: initial,
    };

    let mut termination = TerminationReason::MaxIterations;
    let mut outer = 0;
    while outer < cfg.max_outer_iterations {
        outer += 1;
        let window_slice: Vec<Trajectory> = window.iter().cloned().collect();
        let dataset = IrlDataset::build(&window_slice, demo, &w, env, cfg.subsamples)?;
        let dw = solve_step_direction(&w, &dataset, cfg)?;

        let step = if cfg.step_acceptance {
            accept_step(&w, &dw, &phi_star, &accepted, oracle, cfg)?
        } else {
            take_full_step(&w, &dw, &phi_star, &accepted, oracle)?
        };
        let Some(sample) = step.sample.filter(|_| step.accepted) else {
            termination = TerminationReason::StepSearchExhausted;
            break;
        };

        w = step.new_w;
        debug_assert!(w.is_feasible(cfg.weight_upper_bound));
        let record = recorder.record(
            outer,
            &w,
            &sample,
            Some((step.alpha, step.trials, step.via)),
        )?;
        observer(&record);
        log.push(record);
        samples.push(sample.trajectory.clone());
        window.push_back(sample.trajectory.clone());
        while window.len() > cfg.window {
            window.pop_front();
        }
        accepted = AcceptedState {
            m1: step.m1,
            m2: step.m2,
            sample,
        };
        if accepted.m2 < cfg.m2_convergence_tol {
            termination = TerminationReason::M2BelowTol;
            break;
        }
    }

    Ok(IrlResult {
        final_weights: w,
        final_sample: accepted.sample,
        iteration_log: log,
        termination,
        outer_iterations: outer,
        samples,
    })
}
