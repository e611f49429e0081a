//! Command-line interface. Flags override values from `--config`.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use super::config::{Family, RunConfig};
use crate::env::Setting;
use crate::error::HarnessError;
use crate::trainer::EvalMode;

#[derive(Debug, Parser)]
#[command(name = "causal-gym", version, about = "Causal-identification meta-RL workbench")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Commands,
}

#[derive(Debug, Subcommand)]
pub enum Commands {
    /// Train one agent per seed and write curves, checkpoints and traces.
    Train(ConfigArgs),
    /// Evaluate a trained checkpoint with frozen parameters.
    Evaluate(EvaluateArgs),
    /// Monte-Carlo accuracy of the exact posterior classifier.
    Oracle(ConfigArgs),
    /// Write the frames and a text summary of one recorded trial.
    RenderTrace(RenderArgs),
    /// Combine curve CSVs into a mean ± SE table (and plot).
    Aggregate(AggregateArgs),
}

/// Every configuration key as an optional flag.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// JSON configuration file; flags given here override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub env: Option<Family>,
    #[arg(long)]
    pub setting: Option<Setting>,
    #[arg(long)]
    pub p1: Option<f64>,
    #[arg(long)]
    pub p2: Option<f64>,
    #[arg(long)]
    pub p3: Option<f64>,
    #[arg(long)]
    pub p2_int: Option<f64>,
    #[arg(long)]
    pub p3_int: Option<f64>,
    #[arg(long)]
    pub n_steps: Option<usize>,
    #[arg(long)]
    pub p_chain: Option<f64>,
    #[arg(long)]
    pub blur_sigma: Option<f64>,
    #[arg(long)]
    pub mix: Option<f64>,
    #[arg(long)]
    pub n_obs: Option<usize>,
    #[arg(long)]
    pub n_act: Option<usize>,
    #[arg(long)]
    pub door_open_steps: Option<usize>,
    #[arg(long)]
    pub reward_door: Option<f64>,
    #[arg(long)]
    pub lstm_units: Option<usize>,
    #[arg(long)]
    pub fc_units: Option<usize>,
    #[arg(long)]
    pub baseline_weight: Option<f64>,
    #[arg(long)]
    pub entropy_weight: Option<f64>,
    #[arg(long)]
    pub discount: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub adam_eps: Option<f64>,
    #[arg(long)]
    pub max_grad_norm: Option<f64>,
    /// Trial budget per seed (Monte-Carlo trials for `oracle`).
    #[arg(long)]
    pub trials: Option<usize>,
    /// Repeat or comma-separate for several seeds.
    #[arg(long = "seed", value_delimiter = ',')]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub trace_every: Option<usize>,
    #[arg(long)]
    pub early_stop_window: Option<usize>,
    #[arg(long)]
    pub early_stop_threshold: Option<f64>,
    /// Run directory (default: `$CAUSAL_GYM_OUT/<env>-<setting>`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

macro_rules! overlay {
    ($cfg:ident, $args:ident, $($field:ident),*) => {
        $(if let Some(v) = $args.$field { $cfg.$field = v; })*
    };
}

impl ConfigArgs {
    /// Config file (or defaults) with the given flags applied, validated.
    pub fn resolve(&self) -> Result<RunConfig, HarnessError> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let a = self.clone();
        overlay!(
            c, a, env, p1, p2, p3, p2_int, p3_int, n_steps, p_chain, blur_sigma, mix, n_obs, n_act,
            door_open_steps, reward_door, lstm_units, fc_units, baseline_weight, entropy_weight,
            discount, lr, beta1, beta2, adam_eps, trials, workers
        );
        if a.setting.is_some() {
            c.setting = a.setting;
        }
        if a.max_grad_norm.is_some() {
            c.max_grad_norm = a.max_grad_norm;
        }
        if a.trace_every.is_some() {
            c.trace_every = a.trace_every;
        }
        if a.early_stop_window.is_some() {
            c.early_stop_window = a.early_stop_window;
        }
        if a.early_stop_threshold.is_some() {
            c.early_stop_threshold = a.early_stop_threshold;
        }
        if !a.seeds.is_empty() {
            c.seeds = a.seeds;
        }
        if a.out.is_some() {
            c.out_dir = a.out;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Run directory written by `train`.
    #[arg(long)]
    pub run: PathBuf,
    /// Which seed's checkpoint to load (default: the first seed of the run).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, value_enum, default_value = "sample")]
    pub mode: EvalModeArg,
    /// Seed of the evaluation episodes.
    #[arg(long, default_value_t = 0)]
    pub eval_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum EvalModeArg {
    Sample,
    Argmax,
}

impl From<EvalModeArg> for EvalMode {
    fn from(m: EvalModeArg) -> Self {
        match m {
            EvalModeArg::Sample => EvalMode::Sample,
            EvalModeArg::Argmax => EvalMode::Argmax,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trial: usize,
    /// Output directory (default: `<run>/seed-<seed>/trace-<trial>`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct AggregateArgs {
    /// Curve CSV files or seed directories containing `curve.csv`.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

/// A fully resolved command.
#[derive(Debug, Clone)]
pub enum Command {
    Train(RunConfig),
    Evaluate(EvaluateArgs),
    Oracle(RunConfig),
    RenderTrace(RenderArgs),
    Aggregate(AggregateArgs),
}

impl Cli {
    pub fn resolve(self) -> Result<Command, HarnessError> {
        Ok(match self.command {
            Commands::Train(a) => Command::Train(a.resolve()?),
            Commands::Oracle(a) => {
                let c = a.resolve()?;
                if c.env == Family::Escape {
                    return Err(HarnessError::config(
                        "env",
                        "the oracle covers the tabular and visual models only",
                    ));
                }
                Command::Oracle(c)
            }
            Commands::Evaluate(a) => Command::Evaluate(a),
            Commands::RenderTrace(a) => Command::RenderTrace(a),
            Commands::Aggregate(a) => Command::Aggregate(a),
        })
    }
}

/// Parses `argv` (program name first) and resolves configuration files.
pub fn parse_cli_and_config<I, T>(argv: I) -> Result<Command, HarnessError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    Cli::try_parse_from(argv)
        .map_err(|e| HarnessError::Usage(e.to_string()))?
        .resolve()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn train_with_defaults() {
        let cmd = parse_cli_and_config([
            "causal-gym", "train", "--env", "tabular", "--setting", "offpolicy", "--trials",
            "50000", "--seed", "7",
        ])
        .unwrap();
        let Command::Train(c) = cmd else { panic!("expected train") };
        assert_eq!(c.setting, Some(Setting::OffPolicy));
        assert_eq!(c.trials, 50_000);
        assert_eq!(c.seeds, vec![7]);
        assert_eq!(c.tabular_params(), crate::env::TabularParams::default());
    }

    #[test]
    fn setting_with_escape_is_rejected() {
        let err = parse_cli_and_config(["causal-gym", "train", "--setting", "offpolicy", "--env", "escape"])
            .unwrap_err();
        assert!(matches!(err, HarnessError::Config { ref field, .. } if field == "setting"), "{err}");
    }

    #[test]
    fn missing_config_names_the_path() {
        let err = parse_cli_and_config(["causal-gym", "train", "--config", "/nonexistent/run.json"])
            .unwrap_err()
            .to_string();
        assert!(err.contains("/nonexistent/run.json"), "{err}");
    }

    #[test]
    fn flags_override_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"setting": "confounded", "trials": 10, "seeds": [1, 2]}"#).unwrap();
        let cmd = parse_cli_and_config([
            "causal-gym",
            "train",
            "--config",
            path.to_str().unwrap(),
            "--trials",
            "20",
            "--seed",
            "4,5,6",
        ])
        .unwrap();
        let Command::Train(c) = cmd else { panic!() };
        assert_eq!((c.setting, c.trials, c.seeds), (Some(Setting::Confounded), 20, vec![4, 5, 6]));
    }

    #[test]
    fn unknown_flags_are_usage_errors() {
        let err = parse_cli_and_config(["causal-gym", "train", "--bogus", "1"]).unwrap_err();
        assert!(matches!(err, HarnessError::Usage(_)));
    }

    #[test]
    fn oracle_rejects_escape() {
        assert!(parse_cli_and_config(["causal-gym", "oracle", "--env", "escape"]).is_err());
    }
}
