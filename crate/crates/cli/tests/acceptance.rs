//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL
//! line each and exits nonzero if any failed.

mod common;

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Matrix4x2, Vector4};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use moirl::experiments::{
    evaluate_generalization, learn_preset, make_preset, run_ablation, ExperimentPreset,
    PRESET_NAMES,
};
use moirl::featurizer::{
    feature_derivatives, stage_features, terminal_feature_derivatives, terminal_features,
};
use moirl::irl::{
    nll_gradient, nll_objective, solve_step_direction, DatasetEntry, IrlConfig, IrlDataset,
};
use moirl::oc::{rollout, solve};
use moirl::{
    Control, EnvironmentSpec, FeatureLayout, ObstacleSpec, SolverConfig, State, WeightVector,
};

use common::{demo_file, metrics_without_clock, moirl, preset_file, stderr};

// Tolerances.
const MAX_COST_RATIO: f64 = 1.25;
const GOAL_TOLERANCE: f64 = 0.05;
const MAX_OUTER_ITERATIONS: usize = 15;
const MIN_ALTERNATIVE_SUCCESSES: usize = 4;
const PRESET_RUNTIME_S: f64 = 60.0;
const NLL_GRADIENT_REL: f64 = 1e-6;
const FEATURE_GRADIENT_REL: f64 = 1e-5;
const GRADIENT_RUNTIME_S: f64 = 5.0;
const LQR_MAX_NORM: f64 = 1e-4;
const GAMMA_GAP: f64 = 50.0;
const GAMMA_PERTURBATION: f64 = 1e-6;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

struct PresetRun {
    name: &'static str,
    window: usize,
    outer_iterations: usize,
    termination: String,
    ratio: Option<f64>,
    original_distance: Option<f64>,
    original_ok: bool,
    alternatives_ok: usize,
    seconds: f64,
}

fn run_preset(name: &'static str) -> moirl::Result<PresetRun> {
    let started = Instant::now();
    let preset = make_preset(name)?;
    let oc = SolverConfig::default();
    let cfg = IrlConfig::default();
    let (_, result) = learn_preset(&preset, &cfg, &oc)?;
    let report = evaluate_generalization(&result.final_weights, &preset, &oc)?;
    Ok(PresetRun {
        name,
        window: cfg.window,
        outer_iterations: result.outer_iterations,
        termination: result.termination.to_string(),
        ratio: report.cost_ratio,
        original_distance: report.original.terminal_distance,
        original_ok: report.original.success(),
        alternatives_ok: report.alternative_successes,
        seconds: started.elapsed().as_secs_f64(),
    })
}

fn criterion_1(runs: &[PresetRun]) -> Outcome {
    let pass = runs.iter().all(|r| {
        r.ratio.is_some_and(|x| x <= MAX_COST_RATIO)
            && r.original_ok
            && r.original_distance.is_some_and(|d| d <= GOAL_TOLERANCE)
            && r.seconds <= PRESET_RUNTIME_S
    });
    let detail = runs
        .iter()
        .map(|r| {
            format!(
                "{} ratio {} goal {} {:.2}s",
                r.name,
                r.ratio.map_or("-".into(), |x| format!("{x:.4}")),
                if r.original_ok { "ok" } else { "missed" },
                r.seconds
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    Outcome::new(pass, detail)
}

fn criterion_2(runs: &[PresetRun]) -> Outcome {
    let pass = runs
        .iter()
        .all(|r| r.outer_iterations <= MAX_OUTER_ITERATIONS);
    let detail = runs
        .iter()
        .map(|r| format!("{} {} ({})", r.name, r.outer_iterations, r.termination))
        .collect::<Vec<_>>()
        .join("; ");
    Outcome::new(pass, detail)
}

fn criterion_3(runs: &[PresetRun]) -> Outcome {
    let pass = runs
        .iter()
        .all(|r| r.alternatives_ok >= MIN_ALTERNATIVE_SUCCESSES);
    let detail = runs
        .iter()
        .map(|r| format!("{} {}/5", r.name, r.alternatives_ok))
        .collect::<Vec<_>>()
        .join("; ");
    Outcome::new(pass, detail)
}

fn criterion_4(runs: &[PresetRun], c1: &Outcome, c2: &Outcome, c3: &Outcome) -> Outcome {
    let windows_one = runs.iter().all(|r| r.window == 1);
    Outcome::new(
        windows_one && c1.pass && c2.pass && c3.pass,
        format!("window = 1 on all presets: {windows_one}"),
    )
}

fn random_dataset(rng: &mut StdRng) -> IrlDataset {
    let k = rng.random_range(3..12);
    let n_d = rng.random_range(1..6);
    let thetas = (0..n_d).map(|_| rng.random_range(0.05..=1.0)).collect();
    let entries = (0..rng.random_range(1..5))
        .map(|_| DatasetEntry {
            log_gamma: rng.random_range(-4.0..4.0),
            diffs: (0..n_d)
                .map(|_| (0..k).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect(),
        })
        .collect();
    IrlDataset::from_parts(thetas, entries).unwrap()
}

/// `max|a − b| / max|b|` over a vector, with `b` the analytic value.
fn relative_error(fd: &[f64], analytic: &[f64]) -> f64 {
    let err = fd
        .iter()
        .zip(analytic)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let scale = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        err
    } else {
        err / scale
    }
}

fn nll_gradient_error(rng: &mut StdRng) -> f64 {
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let data = random_dataset(rng);
        let beta = rng.random_range(0.0..0.1);
        let dw: Vec<f64> = (0..data.dim())
            .map(|_| rng.random_range(-0.5..0.5))
            .collect();
        let analytic = nll_gradient(&dw, &data, 0.0, beta).unwrap();
        let fd: Vec<f64> = (0..dw.len())
            .map(|i| {
                let mut plus = dw.clone();
                let mut minus = dw.clone();
                plus[i] += h;
                minus[i] -= h;
                (nll_objective(&plus, &data, 0.0, beta).unwrap()
                    - nll_objective(&minus, &data, 0.0, beta).unwrap())
                    / (2.0 * h)
            })
            .collect();
        worst = worst.max(relative_error(&fd, &analytic));
    }
    worst
}

fn random_env(rng: &mut StdRng) -> EnvironmentSpec {
    let obstacles = (0..rng.random_range(1..4))
        .map(|_| {
            ObstacleSpec::new(
                [rng.random_range(0.0..2.0), rng.random_range(0.0..1.0)],
                rng.random_range(0.1..0.4),
                rng.random_range(0.05..0.3),
            )
        })
        .collect();
    EnvironmentSpec::new([2.0, 1.0], State::at_rest([0.0, 0.0]), obstacles, 10, 0.05).unwrap()
}

/// True when `p` is within `tol` of an activation boundary or an obstacle centre.
fn near_kink(env: &EnvironmentSpec, x: &State, tol: f64) -> bool {
    env.obstacles.iter().any(|o| {
        let dist = (x.position - o.center).norm();
        dist < tol || (o.signed_distance(&x.position) - o.activation_margin).abs() < tol
    })
}

fn perturb(x: &State, u: &Control, i: usize, delta: f64) -> (State, Control) {
    let mut xv = x.to_vector();
    let mut uv = u.force;
    if i < 4 {
        xv[i] += delta;
    } else {
        uv[i - 4] += delta;
    }
    (State::from_vector(&xv), Control { force: uv })
}

fn feature_gradient_error(rng: &mut StdRng) -> f64 {
    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut checked = 0;
    while checked < 100 {
        let env = random_env(rng);
        // sample around the obstacles so their features are often active
        let anchor = env.obstacles[rng.random_range(0..env.obstacles.len())].center;
        let x = State::new(
            [
                anchor.x + rng.random_range(-0.6..0.6),
                anchor.y + rng.random_range(-0.6..0.6),
            ],
            [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)],
        );
        let u = Control::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        if near_kink(&env, &x, 1e-4) {
            continue;
        }
        checked += 1;

        let stage = feature_derivatives(&x, &u, &env);
        let terminal = terminal_feature_derivatives(&x, &env);
        let fd_stage: Vec<Vec<f64>> = (0..6)
            .map(|i| {
                let (xp, up) = perturb(&x, &u, i, h);
                let (xm, um) = perturb(&x, &u, i, -h);
                let fp = stage_features(&xp, &up, &env);
                let fm = stage_features(&xm, &um, &env);
                fp.iter()
                    .zip(&fm)
                    .map(|(a, b)| (a - b) / (2.0 * h))
                    .collect()
            })
            .collect();
        for k in 0..stage.len() {
            let fd: Vec<f64> = fd_stage.iter().map(|col| col[k]).collect();
            let g = &stage.gradient_x[k];
            let gu = &stage.gradient_u[k];
            let analytic = [g[0], g[1], g[2], g[3], gu[0], gu[1]];
            worst = worst.max(relative_error(&fd, &analytic));
        }
        for k in 0..terminal.len() {
            let fd: Vec<f64> = (0..4)
                .map(|i| {
                    let (xp, _) = perturb(&x, &u, i, h);
                    let (xm, _) = perturb(&x, &u, i, -h);
                    (terminal_features(&xp, &env)[k] - terminal_features(&xm, &env)[k]) / (2.0 * h)
                })
                .collect();
            let g = &terminal.gradient_x[k];
            worst = worst.max(relative_error(&fd, g.as_slice()));
        }
    }
    worst
}

fn criterion_5() -> Outcome {
    let started = Instant::now();
    let mut rng = StdRng::seed_from_u64(2024);
    let nll = nll_gradient_error(&mut rng);
    let feat = feature_gradient_error(&mut rng);
    let seconds = started.elapsed().as_secs_f64();
    Outcome::new(
        nll <= NLL_GRADIENT_REL && feat <= FEATURE_GRADIENT_REL && seconds <= GRADIENT_RUNTIME_S,
        format!("nll rel err {nll:.2e}, feature rel err {feat:.2e}, {seconds:.2}s"),
    )
}

/// Finite-horizon discrete LQR for the Euler double integrator, in
/// coordinates relative to the goal, for stage cost
/// `dt·(g·‖e‖² + r·‖u‖²)` and terminal cost `g_T·‖e_T‖²`.
fn riccati_trajectory(env: &EnvironmentSpec, g: f64, r: f64, g_t: f64) -> Vec<Vector4<f64>> {
    let dt = env.dt;
    let mut a = Matrix4::identity();
    a[(0, 2)] = dt;
    a[(1, 3)] = dt;
    let mut b = Matrix4x2::zeros();
    b[(2, 0)] = dt;
    b[(3, 1)] = dt;
    let q = Matrix4::identity() * (2.0 * g * dt);
    let rm = Matrix2::identity() * (2.0 * r * dt);
    let mut p = Matrix4::identity() * (2.0 * g_t);
    let mut gains: Vec<Matrix2x4<f64>> = Vec::with_capacity(env.horizon);
    for _ in 0..env.horizon {
        let k = (rm + b.transpose() * p * b).try_inverse().unwrap() * b.transpose() * p * a;
        p = q + a.transpose() * p * (a - b * k);
        gains.push(k);
    }
    gains.reverse();
    let goal = Vector4::new(env.goal.x, env.goal.y, 0.0, 0.0);
    let mut e = env.start.to_vector() - goal;
    let mut states = vec![e + goal];
    for k in &gains {
        let u = -k * e;
        e = a * e + b * u;
        states.push(e + goal);
    }
    states
}

fn lqr_error() -> f64 {
    let env = EnvironmentSpec::new(
        [1.5, -0.8],
        State::new([0.0, 0.0], [0.3, 0.5]),
        Vec::new(),
        40,
        0.05,
    )
    .unwrap();
    let layout = FeatureLayout::new(0);
    // stage G, XReg, UReg then terminal G, XReg
    let (g, r, g_t) = (0.7, 0.05, 30.0);
    assert_eq!(layout.len(), 5);
    let w = WeightVector(vec![g, 0.0, r, g_t, 0.0]);
    let result = solve(&env, &w, &env.start, None, &SolverConfig::default()).unwrap();
    let oracle = riccati_trajectory(&env, g, r, g_t);
    result
        .trajectory
        .states()
        .iter()
        .zip(&oracle)
        .map(|(s, o)| (s.to_vector() - o).amax())
        .fold(0.0, f64::max)
}

/// Every iLQR cost history seen while solving the presets under the initial,
/// ground-truth and learned weights, from every start.
fn monotone_histories(presets: &[ExperimentPreset], learned: &[WeightVector]) -> (bool, usize) {
    let cfg = SolverConfig::default();
    let mut count = 0;
    let mut ok = true;
    for (p, w_learned) in presets.iter().zip(learned) {
        let w0 = WeightVector::filled(
            p.environment.feature_count(),
            IrlConfig::default().w_init_value,
        );
        let starts =
            std::iter::once(p.environment.start).chain(p.alternative_starts.iter().copied());
        for start in starts {
            for w in [&w0, &p.ground_truth_weights, w_learned] {
                let env = p.environment.with_start(start);
                let r = solve(&env, w, &start, None, &cfg).unwrap();
                ok &= r.cost_history.windows(2).all(|c| c[1] <= c[0]);
                count += 1;
            }
        }
    }
    (ok, count)
}

fn criterion_6(presets: &[ExperimentPreset], learned: &[WeightVector]) -> Outcome {
    let err = lqr_error();
    let (monotone, count) = monotone_histories(presets, learned);
    Outcome::new(
        err <= LQR_MAX_NORM && monotone,
        format!("LQR max-norm deviation {err:.2e}; {count} solves monotone: {monotone}"),
    )
}

/// Step direction with and without a far-from-optimal sample in the window.
fn gamma_perturbation(preset: &ExperimentPreset, w: &WeightVector) -> (f64, f64) {
    let env = &preset.environment;
    let oc = SolverConfig::default();
    let cfg = IrlConfig::default();
    let demo = solve(env, &preset.ground_truth_weights, &env.start, None, &oc).unwrap();
    let near = solve(env, w, &env.start, None, &oc).unwrap();
    // hard push away from the goal
    let far = rollout(
        &env.start,
        &vec![Control::new(-40.0, 40.0); env.horizon],
        env,
    )
    .unwrap();

    let phi_far = moirl::featurizer::integrate_features(&far, env).unwrap();
    let gap = moirl::trajectory_cost(w, &phi_far).unwrap()
        - moirl::trajectory_cost(w, &demo.features).unwrap();

    let base = IrlDataset::build(
        std::slice::from_ref(&near.trajectory),
        &demo.trajectory,
        w,
        env,
        cfg.subsamples,
    )
    .unwrap();
    let with_far = IrlDataset::build(
        &[near.trajectory, far],
        &demo.trajectory,
        w,
        env,
        cfg.subsamples,
    )
    .unwrap();
    let dw_base = solve_step_direction(w, &base, &cfg).unwrap();
    let dw_far = solve_step_direction(w, &with_far, &cfg).unwrap();
    let diff = dw_base
        .iter()
        .zip(&dw_far)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    (gap, diff)
}

/// Random datasets with one extra entry sitting exactly at the gap bound.
fn gamma_boundary_perturbation(rng: &mut StdRng) -> f64 {
    let cfg = IrlConfig::default();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let data = random_dataset(rng);
        let k = data.dim();
        let n_d = data.thetas().len();
        let w = WeightVector((0..k).map(|_| rng.random_range(0.01..1.0)).collect());
        let far = DatasetEntry {
            log_gamma: -GAMMA_GAP,
            diffs: (0..n_d)
                .map(|_| (0..k).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect(),
        };
        let mut injected = data.clone();
        injected.push_entry(far).unwrap();
        let a = solve_step_direction(&w, &data, &cfg).unwrap();
        let b = solve_step_direction(&w, &injected, &cfg).unwrap();
        worst = worst.max(
            a.iter()
                .zip(&b)
                .fold(0.0f64, |m, (x, y)| m.max((x - y).abs())),
        );
    }
    worst
}

fn criterion_7(presets: &[ExperimentPreset]) -> Outcome {
    let boundary = gamma_boundary_perturbation(&mut StdRng::seed_from_u64(77));
    let mut worst = 0.0f64;
    let mut min_gap = f64::INFINITY;
    for p in presets {
        let w0 = WeightVector::filled(
            p.environment.feature_count(),
            IrlConfig::default().w_init_value,
        );
        for w in [&w0, &p.ground_truth_weights] {
            let (gap, diff) = gamma_perturbation(p, w);
            min_gap = min_gap.min(gap);
            worst = worst.max(diff);
        }
    }
    Outcome::new(
        min_gap >= GAMMA_GAP && worst < GAMMA_PERTURBATION && boundary < GAMMA_PERTURBATION,
        format!("step change {boundary:.2e} at gap {GAMMA_GAP} (random data), {worst:.2e} on presets (gap >= {min_gap:.1})"),
    )
}

fn criterion_8() -> Outcome {
    let preset = make_preset("pm2").unwrap();
    let outcomes = run_ablation(&preset, &IrlConfig::default(), &SolverConfig::default()).unwrap();
    let rows: Vec<_> = outcomes.iter().map(|o| o.summary()).collect();
    let full = rows.iter().find(|r| r.label == "e").unwrap();
    let best = rows.iter().all(|r| full.final_m2 <= r.final_m2);
    let generalizes =
        full.original_success && full.alternative_successes >= MIN_ALTERNATIVE_SUCCESSES;
    let detail = rows
        .iter()
        .map(|r| {
            format!(
                "{} m2 {:.3} alt {}/5",
                r.label, r.final_m2, r.alternative_successes
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    Outcome::new(best && generalizes, detail)
}

fn learn_cli(env: &Path, demo: &Path, out_dir: &Path) -> Result<(), String> {
    let out = moirl([
        "learn",
        "--env",
        env.to_str().unwrap(),
        "--demo",
        demo.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    if out.status.success() {
        Ok(())
    } else {
        Err(stderr(&out))
    }
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut notes = Vec::new();
    let mut pass = true;
    for name in PRESET_NAMES {
        let sub = dir.path().join(name);
        fs::create_dir_all(&sub).unwrap();
        let env = preset_file(&sub, name);
        let demo = demo_file(&sub, &env);
        let (a, b) = (sub.join("a"), sub.join("b"));
        if let Err(e) = learn_cli(&env, &demo, &a).and_then(|_| learn_cli(&env, &demo, &b)) {
            return Outcome::new(false, format!("{name}: learn failed: {e}"));
        }
        let same_metrics = metrics_without_clock(&a.join("metrics.csv"))
            == metrics_without_clock(&b.join("metrics.csv"));
        let same_weights =
            fs::read(a.join("weights.toml")).unwrap() == fs::read(b.join("weights.toml")).unwrap();
        let same_samples =
            fs::read(a.join("samples.csv")).unwrap() == fs::read(b.join("samples.csv")).unwrap();
        pass &= same_metrics && same_weights && same_samples;
        notes.push(format!(
            "{name} identical: {}",
            same_metrics && same_weights && same_samples
        ));
    }
    Outcome::new(pass, notes.join("; "))
}

fn report(n: usize, title: &str, o: &Outcome) {
    println!(
        "criterion {n} {:<36} {}  {}",
        title,
        if o.pass { "PASS" } else { "FAIL" },
        o.detail
    );
}

fn main() -> ExitCode {
    let started = Instant::now();
    let runs: Vec<PresetRun> = PRESET_NAMES
        .iter()
        .map(|&name| run_preset(name).unwrap_or_else(|e| panic!("{name}: {e}")))
        .collect();
    let presets: Vec<_> = PRESET_NAMES
        .iter()
        .map(|n| make_preset(n).unwrap())
        .collect();
    let learned: Vec<_> = presets
        .iter()
        .map(|p| {
            learn_preset(p, &IrlConfig::default(), &SolverConfig::default())
                .unwrap()
                .1
                .final_weights
        })
        .collect();

    let c1 = criterion_1(&runs);
    let c2 = criterion_2(&runs);
    let c3 = criterion_3(&runs);
    let c4 = criterion_4(&runs, &c1, &c2, &c3);
    let results = [
        ("cost ratio and goal reached", c1),
        ("outer iterations", c2),
        ("alternative starts", c3),
        ("single-trajectory window", c4),
        ("gradients vs finite differences", criterion_5()),
        (
            "solver vs Riccati, monotone costs",
            criterion_6(&presets, &learned),
        ),
        ("far samples barely move the step", criterion_7(&presets)),
        ("ablation ordering", criterion_8()),
        ("deterministic learn runs", criterion_9()),
    ];

    println!();
    for (i, (title, o)) in results.iter().enumerate() {
        report(i + 1, title, o);
    }
    let failed = results.iter().filter(|(_, o)| !o.pass).count();
    println!(
        "acceptance: {} passed, {failed} failed in {:.1}s",
        results.len() - failed,
        started.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
