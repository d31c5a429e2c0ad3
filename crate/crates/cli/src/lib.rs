//! Command-line harness: configuration, checkpoints and the `equivquad`
//! subcommands.

pub mod checkpoint;
pub mod config;
pub mod symmetry;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use equivquad_core::dynamics::{write_trajectory_csv, EnvConfig, GoalSpec};
use equivquad_core::rl::{
    area_under_curve, eval_config, evaluate_starts, read_curve_csv, run_episodes, sample_starts, train, write_curve_csv,
    write_metrics_csv, Controller, CurveRecord, HoverOracle, RlError, TrainEvent,
};
use thiserror::Error;

use checkpoint::CheckpointError;
use config::{ConfigError, RunConfig};
use symmetry::{Fault, PropertyResult, SuiteOptions};

pub const OUT_ENV: &str = "EQUIVQUAD_OUT";

#[derive(Debug, Parser)]
#[command(name = "equivquad", version, about = "Equivariant reinforcement learning for quadrotor control")]
pub struct Cli {
    /// Overrides the configured seed(s).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output root; falls back to the config, then $EQUIVQUAD_OUT, then `runs`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one agent per seed.
    Train {
        /// Configuration file; same as --config.
        config: Option<PathBuf>,
    },
    /// Tracking metrics of a checkpoint over noise-free episodes.
    Eval(EvalArgs),
    /// Per-step trajectory of one episode.
    Rollout(RolloutArgs),
    /// Run the symmetry property suite.
    CheckSymmetry(SymmetryArgs),
    /// Collect learning curves of several runs into one table.
    ExportCurves {
        /// Run directories containing `curve.csv`.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct PolicyArgs {
    #[arg(long, required_unless_present = "hover_oracle")]
    pub checkpoint: Option<PathBuf>,
    /// Use the analytic hover wrench instead of a checkpoint.
    #[arg(long, conflicts_with = "checkpoint")]
    pub hover_oracle: bool,
    /// Heading command rate in deg/s.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub yaw_rate: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub policy: PolicyArgs,
    #[arg(long, default_value_t = 10)]
    pub episodes: usize,
    /// Rotate every initial state about the vertical axis (degrees).
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub rotate: f64,
}

#[derive(Debug, Args)]
pub struct RolloutArgs {
    #[command(flatten)]
    pub policy: PolicyArgs,
    /// Seconds of simulated time.
    #[arg(long, default_value_t = 10.0)]
    pub duration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FaultArg {
    FlipRhoTheta,
}

#[derive(Debug, Args)]
pub struct SymmetryArgs {
    /// Also check the networks in this checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Random initial conditions per dynamics property.
    #[arg(long, default_value_t = 50)]
    pub cases: usize,
    /// RK4 steps per dynamics case.
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    /// Random coefficient settings per network kind.
    #[arg(long, default_value_t = 100)]
    pub network_samples: usize,
    #[arg(long, hide = true, value_enum)]
    pub inject_fault: Option<FaultArg>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    CheckFailed(String),
    #[error("{0}")]
    Diverged(String),
    #[error("{0}")]
    Schema(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::CheckFailed(_) | CliError::Other(_) => 1,
            CliError::Config(_) => 2,
            CliError::Diverged(_) => 3,
            CliError::Schema(_) => 4,
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        match e {
            CheckpointError::SchemaMismatch(_) => CliError::Schema(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Other(format!("{}: {e}", path.display()))
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> CliError + '_ {
    move |e| CliError::Other(format!("{}: {e}", path.display()))
}

struct Context {
    seed: Option<u64>,
    out: Option<PathBuf>,
    config: Option<RunConfig>,
    quiet: bool,
}

impl Context {
    fn out_root(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| self.config.as_ref().and_then(|c| c.out.clone()))
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("runs"))
    }

    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let config_path = match &cli.command {
        Command::Train { config: Some(p) } => Some(p.clone()),
        _ => cli.config.clone(),
    };
    let config = config_path.as_deref().map(RunConfig::from_file).transpose()?;
    let ctx = Context { seed: cli.seed, out: cli.out, config, quiet: cli.quiet };
    match cli.command {
        Command::Train { .. } => cmd_train(&ctx).map(|_| ()),
        Command::Eval(a) => cmd_eval(&ctx, &a),
        Command::Rollout(a) => cmd_rollout(&ctx, &a),
        Command::CheckSymmetry(a) => cmd_check_symmetry(&ctx, &a),
        Command::ExportCurves { runs } => cmd_export_curves(&ctx, &runs),
    }
}

fn write_curve(path: &Path, curve: &[CurveRecord]) -> Result<(), CliError> {
    let f = fs::File::create(path).map_err(io_err(path))?;
    write_curve_csv(curve, f).map_err(csv_err(path))
}

/// Trains every configured seed; returns the run directories.
fn cmd_train(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let cfg = ctx.config.as_ref().ok_or_else(|| CliError::Other("train needs a configuration file".into()))?;
    let seeds = ctx.seed.map(|s| vec![s]).unwrap_or_else(|| cfg.seeds());
    let goal = GoalSpec::with_yaw_rate(cfg.yaw_rate_rad());
    let interval = cfg.checkpoint_interval();
    let mut dirs = Vec::new();
    for seed in seeds {
        let dir = ctx.out_root().join(format!("{}-seed{seed}", cfg.architecture));
        let ckpt_dir = dir.join("checkpoints");
        fs::create_dir_all(&ckpt_dir).map_err(io_err(&ckpt_dir))?;
        let snapshot = cfg.snapshot(seed);
        let snap_path = dir.join("config.toml");
        fs::write(&snap_path, &snapshot).map_err(io_err(&snap_path))?;
        let curve_path = dir.join("curve.csv");
        let tcfg = cfg.train_config(seed);

        let mut curve: Vec<CurveRecord> = Vec::new();
        let mut best = f64::NEG_INFINITY;
        let mut failure: Option<CliError> = None;
        let mut hook = |e: TrainEvent<'_>| {
            let res = (|| -> Result<(), CliError> {
                match e {
                    TrainEvent::Eval { record, agent } => {
                        curve.push(*record);
                        write_curve(&curve_path, &curve)?;
                        ctx.say(format!(
                            "[{} seed {seed}] step {:>7}  eval {:.4} +- {:.4}",
                            cfg.architecture, record.step, record.eval_mean, record.eval_std
                        ));
                        if record.eval_mean > best {
                            best = record.eval_mean;
                            checkpoint::save(&dir.join("best.ckpt"), agent, record.step, seed, &snapshot)?;
                        }
                        if record.step > 0 && record.step % interval == 0 {
                            let p = ckpt_dir.join(format!("step-{:08}.ckpt", record.step));
                            checkpoint::save(&p, agent, record.step, seed, &snapshot)?;
                        }
                    }
                    TrainEvent::Diverged { step, agent } => {
                        checkpoint::save(&dir.join("diverged.ckpt"), agent, step, seed, &snapshot)?;
                    }
                }
                Ok(())
            })();
            if let Err(err) = res {
                failure.get_or_insert(err);
            }
        };
        let outcome = train(&tcfg, &cfg.env, cfg.architecture, goal, &mut hook);
        if let Some(err) = failure {
            return Err(err);
        }
        match outcome {
            Ok(out) => {
                write_curve(&curve_path, &out.curve)?;
                checkpoint::save(&dir.join("final.ckpt"), &out.agent, tcfg.total_steps, seed, &snapshot)?;
            }
            Err(e @ RlError::Diverged { .. }) => {
                return Err(CliError::Diverged(format!("{e}; partial results kept in {}", dir.display())));
            }
            Err(e) => return Err(CliError::Other(e.to_string())),
        }
        ctx.say(format!("wrote {}", dir.display()));
        dirs.push(dir);
    }
    Ok(dirs)
}

/// Controller and evaluation environment for eval and rollout.
fn policy(ctx: &Context, args: &PolicyArgs) -> Result<(Box<dyn Controller>, EnvConfig, u64), CliError> {
    let from_config = ctx.config.as_ref().map(|c| (c.env, c.train.eval_seed));
    match &args.checkpoint {
        Some(path) => {
            let expected = ctx.config.as_ref().map(|c| c.architecture);
            let ck = checkpoint::load(path, expected)?;
            let (env, eval_seed) = match from_config {
                Some(v) => v,
                None => {
                    let stored = RunConfig::parse(&ck.manifest.config).map_err(|e| {
                        CliError::Other(format!("{}: stored configuration is unreadable: {e}", path.display()))
                    })?;
                    (stored.env, stored.train.eval_seed)
                }
            };
            Ok((Box::new(ck.agent), eval_config(&env), eval_seed))
        }
        None => {
            let (env, eval_seed) = from_config.unwrap_or((EnvConfig::default(), 12345));
            Ok((Box::new(HoverOracle), eval_config(&env), eval_seed))
        }
    }
}

fn cmd_eval(ctx: &Context, args: &EvalArgs) -> Result<(), CliError> {
    let (ctrl, env, eval_seed) = policy(ctx, &args.policy)?;
    let yaw = args.policy.yaw_rate.to_radians();
    let starts: Vec<_> = sample_starts(&env, args.episodes, yaw, ctx.seed.unwrap_or(eval_seed))
        .into_iter()
        .map(|s| s.rotated(args.rotate.to_radians()))
        .collect();
    let m = evaluate_starts(ctrl.as_ref(), &env, &starts).map_err(|e| CliError::Other(e.to_string()))?;
    let root = ctx.out_root();
    fs::create_dir_all(&root).map_err(io_err(&root))?;
    let path = root.join("metrics.csv");
    let f = fs::File::create(&path).map_err(io_err(&path))?;
    write_metrics_csv(&m, args.policy.yaw_rate, f).map_err(csv_err(&path))?;
    ctx.say(format!(
        "score {:.4}  e_x {:.4} m  e_b1 {:.4} rad  mean f {:.3} N  crashes {}/{}  -> {}",
        m.score_mean,
        m.rmse_ex,
        m.rmse_eb1,
        m.mean_f,
        m.crashes,
        m.episodes,
        path.display()
    ));
    Ok(())
}

fn cmd_rollout(ctx: &Context, args: &RolloutArgs) -> Result<(), CliError> {
    let (ctrl, env, eval_seed) = policy(ctx, &args.policy)?;
    if !(args.duration >= 0.0 && args.duration.is_finite()) {
        return Err(CliError::Other("--duration must be a non-negative number of seconds".into()));
    }
    let steps = (args.duration / env.dt).round() as usize;
    let starts = sample_starts(&env, 1, args.policy.yaw_rate.to_radians(), ctx.seed.unwrap_or(eval_seed));
    let ro = run_episodes(ctrl.as_ref(), &env, &starts, steps).map_err(|e| CliError::Other(e.to_string()))?;
    let root = ctx.out_root();
    fs::create_dir_all(&root).map_err(io_err(&root))?;
    let path = root.join("trajectory.csv");
    let f = fs::File::create(&path).map_err(io_err(&path))?;
    write_trajectory_csv(&ro[0].rows, f).map_err(csv_err(&path))?;
    let tail = if ro[0].crashed { " (crashed)" } else { "" };
    ctx.say(format!("{} rows{tail} -> {}", ro[0].rows.len(), path.display()));
    Ok(())
}

fn report(ctx: &Context, results: &[PropertyResult]) {
    let mut section = "";
    for r in results {
        if r.section != section {
            section = r.section;
            ctx.say(format!("[{section}]"));
        }
        ctx.say(format!(
            "  {:<28} max error {:>10.3e}  tolerance {:>8.1e}  {}",
            r.name,
            r.max_error,
            r.tolerance,
            if r.passed() { "ok" } else { "FAILED" }
        ));
    }
}

fn cmd_check_symmetry(ctx: &Context, args: &SymmetryArgs) -> Result<(), CliError> {
    let opts = SuiteOptions {
        cases: args.cases,
        steps: args.steps,
        network_samples: args.network_samples,
        seed: ctx.seed.unwrap_or(0),
        fault: match args.inject_fault {
            Some(FaultArg::FlipRhoTheta) => Fault::FlipRhoTheta,
            None => Fault::None,
        },
        ..SuiteOptions::default()
    };
    let mut results = symmetry::core_suite(&opts);
    if let Some(path) = &args.checkpoint {
        let ck = checkpoint::load(path, ctx.config.as_ref().map(|c| c.architecture))?;
        results.extend(symmetry::agent_suite(&ck.agent, &opts));
    }
    report(ctx, &results);
    let failed: Vec<String> = results
        .iter()
        .filter(|r| !r.passed())
        .map(|r| format!("{}/{} ({:.3e})", r.section, r.name, r.max_error))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!("failed properties: {}", failed.join(", "))))
    }
}

fn cmd_export_curves(ctx: &Context, runs: &[PathBuf]) -> Result<(), CliError> {
    let root = ctx.out_root();
    fs::create_dir_all(&root).map_err(io_err(&root))?;
    let curves_path = root.join("curves.csv");
    let summary_path = root.join("summary.csv");
    let mut curves = csv::Writer::from_path(&curves_path).map_err(csv_err(&curves_path))?;
    let mut summary = csv::Writer::from_path(&summary_path).map_err(csv_err(&summary_path))?;
    curves
        .write_record(["run", "architecture", "seed", "step", "eval_mean", "eval_std", "actor_loss", "critic_loss"])
        .map_err(csv_err(&curves_path))?;
    summary
        .write_record(["run", "architecture", "seed", "records", "auc", "final_mean", "best_step", "best_mean"])
        .map_err(csv_err(&summary_path))?;
    for dir in runs {
        let cfg = RunConfig::from_file(&dir.join("config.toml"))?;
        let path = dir.join("curve.csv");
        let f = fs::File::open(&path).map_err(io_err(&path))?;
        let recs = read_curve_csv(f).map_err(csv_err(&path))?;
        let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let arch = cfg.architecture.to_string();
        let seed = cfg.seeds()[0].to_string();
        for r in &recs {
            curves
                .write_record([
                    name.clone(),
                    arch.clone(),
                    seed.clone(),
                    r.step.to_string(),
                    r.eval_mean.to_string(),
                    r.eval_std.to_string(),
                    r.actor_loss.to_string(),
                    r.critic_loss.to_string(),
                ])
                .map_err(csv_err(&curves_path))?;
        }
        let best = recs.iter().fold(None::<&CurveRecord>, |b, r| match b {
            Some(b) if b.eval_mean >= r.eval_mean => Some(b),
            _ => Some(r),
        });
        let final_mean = recs.last().map(|r| r.eval_mean).unwrap_or(f64::NAN);
        summary
            .write_record([
                name,
                arch,
                seed,
                recs.len().to_string(),
                area_under_curve(&recs).to_string(),
                final_mean.to_string(),
                best.map(|b| b.step.to_string()).unwrap_or_default(),
                best.map(|b| b.eval_mean.to_string()).unwrap_or_default(),
            ])
            .map_err(csv_err(&summary_path))?;
    }
    curves.flush().map_err(io_err(&curves_path))?;
    summary.flush().map_err(io_err(&summary_path))?;
    ctx.say(format!("wrote {} and {}", curves_path.display(), summary_path.display()));
    Ok(())
}

/// Trains every seed of `cfg` under `out`; the library form of `train`.
pub fn train_runs(cfg: RunConfig, out: &Path, quiet: bool) -> Result<Vec<PathBuf>, CliError> {
    cmd_train(&Context { seed: None, out: Some(out.to_path_buf()), config: Some(cfg), quiet })
}
