//! The `lspc` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 I/O or parse error, 3 numeric
//! abort, 4 a checked property failed.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::dataset::{self, BehaviorSpec, MetricDef};
use crate::env::AnyEnv;
use crate::eval::theory::theory_check_smoothed;
use crate::eval::{discretize_policy, evaluate, sweep_epsilon, theory_check, BundleActor, TheoryReport};
use crate::nn::gradcheck;
use crate::policy::PolicyKind;
use crate::rng;
use crate::trainer::{load_model, TrainConfig, Trainer, LOG_FILE};
use crate::{LspcError, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_CHECK: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "lspc", version, about = "Safe offline RL with latent safety-prioritized constraints")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Roll out a scripted behavior policy and write an LSPC-DS dataset.
    Collect {
        #[arg(long)]
        env: String,
        /// `straight`, `detour` or `mixture[:w_safe=0.5,...]`.
        #[arg(long)]
        behavior: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train critics and policies; writes a checkpoint directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the configured step count.
        #[arg(long)]
        steps: Option<usize>,
        /// Continue from the checkpoint already in `--out`.
        #[arg(long)]
        resume: bool,
    },
    /// Roll out a trained policy and report normalized returns.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        env: String,
        #[arg(long)]
        policy: String,
        #[arg(long)]
        episodes: usize,
        #[arg(long)]
        kappa: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decoded actions and their reward Q values at one state.
    Scan {
        #[arg(long)]
        ckpt: PathBuf,
        /// Comma-separated state coordinates.
        #[arg(long, allow_hyphen_values = true)]
        state: String,
        #[arg(long)]
        samples: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train and evaluate over several restriction radii.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated radii.
        #[arg(long)]
        eps: String,
        /// Number of seeds, `0..seeds`.
        #[arg(long)]
        seeds: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        /// Defaults to the configured kappa.
        #[arg(long)]
        kappa: Option<f64>,
    },
    /// Check the tabular performance and safety bounds for a grid checkpoint.
    Theory {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        env: String,
        #[arg(long)]
        out: PathBuf,
        /// Action samples per state when discretizing.
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Finite-difference check of every training loss.
    Gradcheck {
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn exit_code(e: &LspcError) -> i32 {
    match e {
        LspcError::Usage(_) | LspcError::Shape(_) | LspcError::Config(_) | LspcError::Infeasible(_) => EXIT_USAGE,
        LspcError::Io(_) | LspcError::Parse(_) | LspcError::Json(_) => EXIT_IO,
        LspcError::Numeric { .. } => EXIT_NUMERIC,
    }
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_CHECK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn parse_floats(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| LspcError::Usage(format!("bad {what} value {t:?}"))))
        .collect()
}

fn read_config(path: &Path) -> Result<TrainConfig> {
    TrainConfig::from_json(&fs::read_to_string(path)?)
}

#[derive(Serialize)]
struct TheoryOutput {
    all_hold: bool,
    optimal: TheoryReport,
    smoothed: TheoryReport,
}

/// Smoothing weight of the full-support reference in `theory` output.
const THEORY_SMOOTHING: f64 = 0.05;

/// `Ok(false)` means the command ran but a checked property failed.
fn dispatch(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Collect { env, behavior, n, seed, out } => {
            let env = AnyEnv::from_id(&env)?;
            let spec: BehaviorSpec = behavior.parse()?;
            let ds = dataset::collect(&env, &spec, n, seed)?;
            dataset::save(&ds, &out)?;
            log::info!("wrote {} transitions in {} episodes", ds.n, ds.episode_starts.len());
            Ok(true)
        }
        Command::Train { data, config, out, steps, resume } => {
            let ds = dataset::load(&data)?;
            let mut trainer = if resume {
                Trainer::resume(&out, &ds)?
            } else {
                let mut cfg = read_config(&config)?;
                if let Some(k) = steps {
                    cfg.steps = k;
                }
                Trainer::new(cfg, &ds)?
            };
            let total = steps.unwrap_or(trainer.config.steps);
            if !resume {
                fs::create_dir_all(&out)?;
                let _ = fs::remove_file(out.join(LOG_FILE));
            }
            trainer.run_until(&ds, total)?;
            trainer.config.steps = trainer.config.steps.max(total);
            trainer.save(&out)?;
            trainer.write_log(&out.join(LOG_FILE), 0)?;
            Ok(true)
        }
        Command::Eval { ckpt, env, policy, episodes, kappa, seed, out } => {
            let kind: PolicyKind = policy.parse()?;
            let model = load_model(&ckpt)?;
            let env = AnyEnv::from_id(&env)?;
            check_dims(&env, model.meta.state_dim, model.meta.action_dim)?;
            let base = model
                .meta
                .metric
                .ok_or_else(|| LspcError::Config("checkpoint carries no reward range".into()))?;
            let metric = MetricDef::new(base.r_min, base.r_max, kappa)?;
            let report = evaluate(&BundleActor { bundle: &model.policy, kind }, &env, episodes, &metric, seed)?;
            write_json(&report, out.as_deref())?;
            Ok(true)
        }
        Command::Scan { ckpt, state, samples, out, seed } => {
            let model = load_model(&ckpt)?;
            let s = parse_floats(&state, "state")?;
            let rows = model.policy.action_scan(&model.critics, &s, samples, &mut rng::stream(seed, "scan", 0))?;
            write_json(&rows, Some(&out))?;
            Ok(true)
        }
        Command::Sweep { config, data, eps, seeds, out, episodes, kappa } => {
            let cfg = read_config(&config)?;
            let ds = dataset::load(&data)?;
            let eps = parse_floats(&eps, "eps")?;
            let seeds: Vec<u64> = (0..seeds).collect();
            let table = sweep_epsilon(&cfg, &ds, &eps, &seeds, episodes, kappa.unwrap_or(cfg.kappa))?;
            write_json(&table, Some(&out))?;
            Ok(true)
        }
        Command::Theory { ckpt, env, out, samples, seed } => {
            let model = load_model(&ckpt)?;
            let AnyEnv::Grid(grid) = AnyEnv::from_id(&env)? else {
                return Err(LspcError::Usage("theory needs a grid-hazard environment".into()));
            };
            check_dims(&AnyEnv::Grid(grid.clone()), model.meta.state_dim, model.meta.action_dim)?;
            let pi = discretize_policy(&model.policy, PolicyKind::LspcO, &grid, samples, seed)?;
            let pi_s = discretize_policy(&model.policy, PolicyKind::LspcS, &grid, samples, seed)?;
            let optimal = theory_check(&grid.cmdp, &pi, &pi_s)?;
            let smoothed = theory_check_smoothed(&grid.cmdp, &pi, &pi_s, THEORY_SMOOTHING)?;
            let all_hold = optimal.all_hold && smoothed.all_hold;
            write_json(&TheoryOutput { all_hold, optimal, smoothed }, Some(&out))?;
            Ok(all_hold)
        }
        Command::Gradcheck { seeds, out } => {
            let report = gradcheck::run(seeds)?;
            write_json(&report, out.as_deref())?;
            Ok(report.passed)
        }
    }
}

fn check_dims(env: &AnyEnv, state_dim: usize, action_dim: usize) -> Result<()> {
    let e = env.as_env();
    if e.state_dim() != state_dim || e.action_dim() != action_dim {
        return Err(LspcError::Shape(format!(
            "checkpoint is {state_dim}x{action_dim} but {} is {}x{}",
            e.id(),
            e.state_dim(),
            e.action_dim()
        )));
    }
    Ok(())
}
