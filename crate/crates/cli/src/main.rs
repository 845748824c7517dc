use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use moirl::experiments::{self, ExperimentPreset};
use moirl::io::{self, EnvironmentFile};
use moirl::irl::{self, IrlConfig, IterationRecord, SolverOracle, TerminationReason};
use moirl::{Error, SolverConfig, WeightVector};

#[derive(Parser)]
#[command(
    name = "moirl",
    version,
    about = "Learn trajectory-cost weights from a single demonstration"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the optimal trajectory under given weights and check it
    /// reaches the goal without collision.
    Demo {
        /// Environment file.
        #[arg(long)]
        env: PathBuf,
        /// Weights file; defaults to the environment's own weights.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Output trajectory CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Learn weights from a demonstration.
    Learn {
        #[arg(long)]
        env: PathBuf,
        /// Demonstration trajectory CSV.
        #[arg(long)]
        demo: PathBuf,
        /// Directory receiving weights.toml, metrics.csv, samples.csv and manifest.json.
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        learn: LearnFlags,
    },
    /// Roll out learned weights from every start and compare against the
    /// ground-truth weights.
    Eval {
        #[arg(long)]
        env: PathBuf,
        /// Learned weights file.
        #[arg(long)]
        weights: PathBuf,
        /// Ground-truth weights; defaults to the environment's own weights.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Report JSON output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the five-variant ablation (a: none, b: +subsampling,
    /// c: b+acceptance, d: b+regularization, e: all).
    Ablate {
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        demo: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 100)]
        max_iterations: usize,
    },
    /// Write a built-in preset (pm1, pm2, pm3) as an environment file.
    Preset {
        name: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Serialize)]
struct LearnFlags {
    /// Number of recent samples kept in the dataset.
    #[arg(long, default_value_t = 1)]
    window: usize,
    /// Number of suffix truncations per sample.
    #[arg(long, default_value_t = 20)]
    subsamples: usize,
    #[arg(long, default_value_t = 1e-6)]
    lambda: f64,
    #[arg(long, default_value_t = 1e-2)]
    beta: f64,
    /// Confine weights to [0, 1].
    #[arg(long)]
    bounded_weights: bool,
    /// Take every proposed step with unit length.
    #[arg(long)]
    disable_step_acceptance: bool,
    /// Set both regularization strengths to zero.
    #[arg(long)]
    disable_regularization: bool,
    /// Same as --subsamples 1.
    #[arg(long)]
    disable_subsampling: bool,
    #[arg(long, default_value_t = 100)]
    max_iterations: usize,
    #[arg(long, default_value_t = 1e-3)]
    m2_tol: f64,
}

impl LearnFlags {
    fn config(&self) -> IrlConfig {
        let base = if self.bounded_weights {
            IrlConfig::bounded()
        } else {
            IrlConfig::default()
        };
        let mut cfg = IrlConfig {
            window: self.window,
            subsamples: self.subsamples,
            lambda_l1: self.lambda,
            beta_l2: self.beta,
            max_outer_iterations: self.max_iterations,
            m2_convergence_tol: self.m2_tol,
            step_acceptance: !self.disable_step_acceptance,
            ..base
        };
        if self.disable_regularization {
            cfg.lambda_l1 = 0.0;
            cfg.beta_l2 = 0.0;
        }
        if self.disable_subsampling {
            cfg.subsamples = 1;
        }
        cfg
    }
}

/// Exit codes: 1 i/o, 2 configuration, 3 numerical or predicate failure.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io { .. } => 1,
        Error::Parse { .. }
        | Error::InvalidConfig(_)
        | Error::InvalidEnvironment(_)
        | Error::UnknownPreset(_)
        | Error::DimensionMismatch { .. }
        | Error::HorizonMismatch { .. }
        | Error::EmptyWeights => 2,
        Error::NonFinite(_)
        | Error::Predicate(_)
        | Error::EmptyDataset
        | Error::IndexOutOfRange { .. } => 3,
    }
}

fn unix_seconds() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

fn ensure_dir(dir: &Path) -> moirl::Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

struct Loaded {
    file: EnvironmentFile,
    env: moirl::EnvironmentSpec,
}

fn load_env(path: &Path) -> moirl::Result<Loaded> {
    let file = EnvironmentFile::load(path)?;
    let env = file.environment()?;
    Ok(Loaded { file, env })
}

fn preset_from(path: &Path, truth: Option<&Path>) -> moirl::Result<ExperimentPreset> {
    let loaded = load_env(path)?;
    let mut file = loaded.file;
    if let Some(truth) = truth {
        let w = io::read_weights(truth, loaded.env.layout())?;
        file.weights = Some(tables_of(&w, loaded.env.layout()));
    }
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("custom");
    ExperimentPreset::from_file(&file, stem)
}

fn tables_of(w: &WeightVector, layout: moirl::FeatureLayout) -> io::WeightTables {
    let mut tables = io::WeightTables::default();
    for (id, &v) in layout.ids().iter().zip(w.as_slice()) {
        let table = match id.phase {
            moirl::Phase::Stage => &mut tables.stage,
            moirl::Phase::Terminal => &mut tables.terminal,
        };
        table.insert(id.short_name(), v);
    }
    tables
}

fn cmd_demo(env_path: &Path, weights: Option<&Path>, out: &Path) -> moirl::Result<()> {
    let preset = preset_from(env_path, weights)?;
    let tau = experiments::generate_demonstration(&preset, &SolverConfig::default())?;
    io::write_trajectory(out, &tau)?;
    println!(
        "wrote {} ({} states, terminal distance {:.4} m)",
        out.display(),
        tau.states().len(),
        experiments::terminal_distance(&tau, &preset.environment)
    );
    Ok(())
}

#[derive(Serialize)]
struct RunManifest<'a> {
    tool: &'static str,
    tool_version: &'static str,
    command: &'static str,
    environment_file: String,
    demonstration_file: String,
    preset: Option<String>,
    flags: &'a LearnFlags,
    irl_config: &'a IrlConfig,
    solver_config: &'a SolverConfig,
    started_unix_s: f64,
    finished_unix_s: f64,
    status: String,
    termination: Option<TerminationReason>,
    outer_iterations: usize,
    final_m2: Option<f64>,
    outputs: Outputs,
}

#[derive(Serialize)]
struct Outputs {
    weights: PathBuf,
    metrics: PathBuf,
    samples: PathBuf,
    manifest: PathBuf,
}

fn cmd_learn(
    env_path: &Path,
    demo_path: &Path,
    out_dir: &Path,
    flags: &LearnFlags,
) -> moirl::Result<()> {
    let started = unix_seconds();
    let loaded = load_env(env_path)?;
    let env = &loaded.env;
    let layout = env.layout();
    let truth = loaded.file.weights(layout)?;
    let cfg = flags.config();
    cfg.validate()?;
    let oc_cfg = SolverConfig::default();
    let demo = io::read_trajectory(demo_path, env.dt)?;
    ensure_dir(out_dir)?;

    let outputs = Outputs {
        weights: out_dir.join("weights.toml"),
        metrics: out_dir.join("metrics.csv"),
        samples: out_dir.join("samples.csv"),
        manifest: out_dir.join("manifest.json"),
    };
    let oracle = SolverOracle::new(env, &oc_cfg);
    let mut seen: Vec<IterationRecord> = Vec::new();
    let outcome = irl::run_observed(&demo, env, &cfg, &oracle, truth.as_ref(), &mut |r| {
        seen.push(r.clone())
    });

    let mut manifest = RunManifest {
        tool: "moirl",
        tool_version: env!("CARGO_PKG_VERSION"),
        command: "learn",
        environment_file: env_path.display().to_string(),
        demonstration_file: demo_path.display().to_string(),
        preset: loaded.file.name.clone(),
        flags,
        irl_config: &cfg,
        solver_config: &oc_cfg,
        started_unix_s: started,
        finished_unix_s: 0.0,
        status: "ok".into(),
        termination: None,
        outer_iterations: 0,
        final_m2: None,
        outputs,
    };

    let result = match outcome {
        Ok(result) => result,
        Err(err) => {
            // keep whatever was accepted before the failure
            if let Some(last) = seen.last() {
                io::write_weights(&manifest.outputs.weights, &last.weights, layout)?;
                io::write_atomic(&manifest.outputs.metrics, &io::metrics_to_csv(&seen)?)?;
                manifest.outer_iterations = last.iteration;
                manifest.final_m2 = Some(last.m2);
            }
            manifest.status = format!("failed: {err}");
            manifest.finished_unix_s = unix_seconds();
            io::write_json(&manifest.outputs.manifest, &manifest)?;
            return Err(err);
        }
    };

    io::write_weights(&manifest.outputs.weights, &result.final_weights, layout)?;
    io::write_atomic(
        &manifest.outputs.metrics,
        &io::metrics_to_csv(&result.iteration_log)?,
    )?;
    io::write_atomic(
        &manifest.outputs.samples,
        &io::samples_to_csv(&result.samples)?,
    )?;
    manifest.termination = Some(result.termination);
    manifest.outer_iterations = result.outer_iterations;
    manifest.final_m2 = Some(result.final_m2());
    manifest.finished_unix_s = unix_seconds();
    io::write_json(&manifest.outputs.manifest, &manifest)?;
    println!(
        "terminated: {} after {} outer iterations, final m2 {:.6e}",
        result.termination,
        result.outer_iterations,
        result.final_m2()
    );
    println!("outputs in {}", out_dir.display());
    Ok(())
}

fn cmd_eval(
    env_path: &Path,
    weights: &Path,
    truth: Option<&Path>,
    out: Option<&Path>,
) -> moirl::Result<()> {
    let preset = preset_from(env_path, truth)?;
    let learned = io::read_weights(weights, preset.environment.layout())?;
    let report = experiments::evaluate_generalization(&learned, &preset, &SolverConfig::default())?;
    if let Some(out) = out {
        io::write_json(out, &report)?;
    }
    print!("{}", report.table());
    Ok(())
}

#[derive(Serialize)]
struct AblationSummary {
    preset: String,
    /// Variants sorted by final m2, best first.
    ranking: Vec<experiments::AblationSummaryRow>,
    reports: Vec<experiments::EvaluationReport>,
}

fn cmd_ablate(
    env_path: &Path,
    demo_path: &Path,
    out_dir: &Path,
    max_iterations: usize,
) -> moirl::Result<()> {
    let preset = preset_from(env_path, None)?;
    let layout = preset.environment.layout();
    let demo = io::read_trajectory(demo_path, preset.environment.dt)?;
    let base = IrlConfig {
        max_outer_iterations: max_iterations,
        ..IrlConfig::default()
    };
    let outcomes = experiments::run_ablation_on(&preset, &demo, &base, &SolverConfig::default())?;
    ensure_dir(out_dir)?;
    for o in &outcomes {
        io::write_atomic(
            &out_dir.join(format!("metrics_{}.csv", o.label)),
            &io::metrics_to_csv(o.metrics())?,
        )?;
        io::write_weights(
            &out_dir.join(format!("weights_{}.toml", o.label)),
            &o.result.final_weights,
            layout,
        )?;
    }
    let summary = AblationSummary {
        preset: preset.name.clone(),
        ranking: experiments::rank_by_m2(&outcomes),
        reports: outcomes.iter().map(|o| o.report.clone()).collect(),
    };
    io::write_json(&out_dir.join("summary.json"), &summary)?;
    println!(
        "{:<8} {:>14} {:>6} {:>10} {:>10}",
        "variant", "final_m2", "iters", "original", "alt_ok"
    );
    for row in &summary.ranking {
        println!(
            "{:<8} {:>14.6e} {:>6} {:>10} {:>10}",
            row.label,
            row.final_m2,
            row.outer_iterations,
            row.original_success,
            row.alternative_successes
        );
    }
    Ok(())
}

fn cmd_preset(name: &str, out: &Path) -> moirl::Result<()> {
    let text = experiments::preset_source(name)?;
    io::write_atomic(out, text.as_bytes())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Demo { env, weights, out } => cmd_demo(env, weights.as_deref(), out),
        Command::Learn {
            env,
            demo,
            out_dir,
            learn,
        } => cmd_learn(env, demo, out_dir, learn),
        Command::Eval {
            env,
            weights,
            truth,
            out,
        } => cmd_eval(env, weights, truth.as_deref(), out.as_deref()),
        Command::Ablate {
            env,
            demo,
            out_dir,
            max_iterations,
        } => cmd_ablate(env, demo, out_dir, *max_iterations),
        Command::Preset { name, out } => cmd_preset(name, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
