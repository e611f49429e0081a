//! Run management: training runs on disk, evaluation, oracle reports,
//! trace rendering and curve aggregation.
//!
//! A training run directory looks like
//!
//! ```text
//! <run>/config.json
//! <run>/aggregate.csv        trial,mean,se
//! <run>/curve.svg
//! <run>/seed-<s>/curve.csv   trial,reward,trailing_mean
//! <run>/seed-<s>/params.bin  flat little-endian f64
//! <run>/seed-<s>/params.json manifest
//! <run>/seed-<s>/traces.json (with trace_every)
//! ```

pub mod cli;
pub mod config;
pub mod curves;
pub mod trace;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use serde::Serialize;

pub use cli::{parse_cli_and_config, Cli, Command};
pub use config::{Family, RunConfig, OUT_ENV_VAR};

use crate::agent::Tensors;
use crate::error::HarnessError;
use crate::oracle::bayes_accuracy;
use crate::stats::MeanSe;
use crate::trainer::{evaluate, train_partial};
use crate::GymRng;
use curves::{aggregate, curve_rows, read_curve_csv, write_aggregate_csv, write_curve_csv, write_svg};
use trace::{load_traces, render_trace, save_traces, EpisodeTrace};

pub const CONFIG_FILE: &str = "config.json";
pub const CURVE_FILE: &str = "curve.csv";
pub const TRACE_FILE: &str = "traces.json";

pub fn seed_dir(run_dir: &Path, seed: u64) -> PathBuf {
    run_dir.join(format!("seed-{seed}"))
}

fn create_dir(path: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(path).map_err(|e| HarnessError::io(path, e))
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedReport {
    pub seed: u64,
    pub trials: usize,
    pub final_trailing_mean: f64,
    pub skipped_updates: usize,
    pub stopped_early: bool,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub run_dir: PathBuf,
    pub seeds: Vec<SeedReport>,
}

/// Trains every seed in turn. Curves are flushed even when a run fails.
pub fn run_training(cfg: &RunConfig) -> Result<TrainReport, HarnessError> {
    cfg.validate()?;
    let dir = cfg.run_dir();
    create_dir(&dir)?;
    cfg.save(&dir.join(CONFIG_FILE))?;
    let mut reports = Vec::new();
    let mut runs = Vec::new();
    for &seed in &cfg.seeds {
        let sd = seed_dir(&dir, seed);
        create_dir(&sd)?;
        let tc = cfg.train_config(seed)?;
        log::info!("training {} seed {seed} for {} trials", cfg.run_name(), cfg.trials);
        let start = Instant::now();
        let (outcome, failure) = train_partial(&tc)?;
        let rows = curve_rows(&outcome.curve, curves::SMOOTHING_WINDOW);
        write_curve_csv(&sd.join(CURVE_FILE), &rows)?;
        if let Some(err) = failure {
            return Err(err.into());
        }
        outcome
            .params
            .save(&sd.join("params.bin"), &sd.join("params.json"))?;
        if !outcome.traces.is_empty() {
            let traces: Vec<EpisodeTrace> = outcome
                .traces
                .into_iter()
                .map(|(trial, steps)| EpisodeTrace { trial, steps })
                .collect();
            save_traces(&sd.join(TRACE_FILE), &traces)?;
        }
        let report = SeedReport {
            seed,
            trials: rows.len(),
            final_trailing_mean: rows.last().map_or(f64::NAN, |r| r.trailing_mean),
            skipped_updates: outcome.skipped_updates,
            stopped_early: outcome.stopped_early,
            seconds: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "seed {seed}: {} trials, trailing mean {:.4}, {:.1}s",
            report.trials,
            report.final_trailing_mean,
            report.seconds
        );
        reports.push(report);
        runs.push(rows);
    }
    let agg = aggregate(&runs)?;
    write_aggregate_csv(&dir.join("aggregate.csv"), &agg)?;
    write_svg(&dir.join("curve.svg"), &agg, &cfg.run_name())?;
    Ok(TrainReport {
        run_dir: dir,
        seeds: reports,
    })
}

fn load_run(run_dir: &Path, seed: Option<u64>) -> Result<(RunConfig, u64), HarnessError> {
    let cfg = RunConfig::load(&run_dir.join(CONFIG_FILE))?;
    let seed = seed.unwrap_or(cfg.seeds[0]);
    Ok((cfg, seed))
}

pub fn run_evaluate(args: &cli::EvaluateArgs) -> Result<MeanSe, HarnessError> {
    let (cfg, seed) = load_run(&args.run, args.seed)?;
    let sd = seed_dir(&args.run, seed);
    let params = Tensors::load(&sd.join("params.bin"), &sd.join("params.json"))?;
    let mut rng = GymRng::seed_from_u64(args.eval_seed);
    Ok(evaluate(
        &params,
        &cfg.env_spec()?,
        args.trials,
        &mut rng,
        args.mode.into(),
    )?)
}

pub fn run_oracle(cfg: &RunConfig) -> Result<MeanSe, HarnessError> {
    let setting = cfg
        .setting
        .ok_or_else(|| HarnessError::config("setting", "required for the oracle"))?;
    let mut rng = GymRng::seed_from_u64(cfg.seeds[0]);
    Ok(bayes_accuracy(&cfg.tabular_params(), setting, cfg.trials, &mut rng)?)
}

pub fn run_render(args: &cli::RenderArgs) -> Result<Vec<PathBuf>, HarnessError> {
    let (_, seed) = load_run(&args.run, args.seed)?;
    let sd = seed_dir(&args.run, seed);
    let path = sd.join(TRACE_FILE);
    if !path.exists() {
        return Err(HarnessError::MissingTrace { trial: args.trial });
    }
    let traces = load_traces(&path)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| sd.join(format!("trace-{}", args.trial)));
    render_trace(&traces, args.trial, &out)
}

pub fn run_aggregate(args: &cli::AggregateArgs) -> Result<usize, HarnessError> {
    let runs = args
        .inputs
        .iter()
        .map(|p| {
            let file = if p.is_dir() { p.join(CURVE_FILE) } else { p.clone() };
            read_curve_csv(&file)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let agg = aggregate(&runs)?;
    write_aggregate_csv(&args.out, &agg)?;
    if let Some(svg) = &args.svg {
        write_svg(svg, &agg, "mean reward")?;
    }
    Ok(agg.len())
}

/// Executes a command and returns a human-readable summary.
pub fn execute(cmd: &Command) -> Result<String, HarnessError> {
    Ok(match cmd {
        Command::Train(cfg) => {
            let report = run_training(cfg)?;
            serde_json::to_string_pretty(&report).expect("report serializes")
        }
        Command::Evaluate(args) => {
            let s = run_evaluate(args)?;
            format!("mean reward {:.4} ± {:.4} (n = {})", s.mean, s.se, s.n)
        }
        Command::Oracle(cfg) => {
            let s = run_oracle(cfg)?;
            format!(
                "{} Bayes accuracy {:.4} ± {:.4} (n = {})",
                cfg.setting.map_or("", |s| s.name()),
                s.mean,
                s.se,
                s.n
            )
        }
        Command::RenderTrace(args) => {
            let files = run_render(args)?;
            files
                .iter()
                .map(|p| p.display().to_string())
                .collect::<Vec<_>>()
                .join("\n")
        }
        Command::Aggregate(args) => {
            let n = run_aggregate(args)?;
            format!("{n} grid points written to {}", args.out.display())
        }
    })
}
