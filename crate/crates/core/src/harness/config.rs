//! Flat JSON run configuration; every key has a matching CLI flag.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::{EnvSpec, EscapeParams, Setting, TabularParams, VisualParams};
use crate::error::{EnvError, HarnessError};
use crate::trainer::{AdamConfig, EarlyStop, LossWeights, TrainConfig};

/// Environment variable naming the default output root.
pub const OUT_ENV_VAR: &str = "CAUSAL_GYM_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Tabular,
    Visual,
    Escape,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Tabular => "tabular",
            Family::Visual => "visual",
            Family::Escape => "escape",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub env: Family,
    pub setting: Option<Setting>,

    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub p2_int: f64,
    pub p3_int: f64,
    pub n_steps: usize,
    pub p_chain: f64,

    pub node_coords: [(usize, usize); 3],
    pub blur_sigma: f64,
    pub mix: f64,

    pub n_obs: usize,
    pub n_act: usize,
    pub door_open_steps: usize,
    pub reward_door: f64,

    pub lstm_units: usize,
    pub fc_units: usize,

    pub baseline_weight: f64,
    pub entropy_weight: f64,
    pub discount: f64,

    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub max_grad_norm: Option<f64>,

    pub trials: usize,
    pub seeds: Vec<u64>,
    pub workers: usize,
    pub trace_every: Option<usize>,
    pub early_stop_window: Option<usize>,
    pub early_stop_threshold: Option<f64>,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let tab = TabularParams::default();
        let vis = VisualParams::default();
        let esc = EscapeParams::default();
        let loss = LossWeights::default();
        let adam = AdamConfig::default();
        Self {
            env: Family::Tabular,
            setting: None,
            p1: tab.p1,
            p2: tab.p2,
            p3: tab.p3,
            p2_int: tab.p2_int,
            p3_int: tab.p3_int,
            n_steps: tab.n_steps,
            p_chain: tab.p_chain,
            node_coords: vis.node_coords,
            blur_sigma: vis.blur_sigma,
            mix: vis.mix,
            n_obs: esc.n_obs,
            n_act: esc.n_act,
            door_open_steps: esc.door_open_steps,
            reward_door: esc.reward_door,
            lstm_units: 48,
            fc_units: 64,
            baseline_weight: loss.baseline_weight,
            entropy_weight: loss.entropy_weight,
            discount: loss.discount,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            adam_eps: adam.eps,
            max_grad_norm: None,
            trials: 50_000,
            seeds: vec![0],
            workers: 4,
            trace_every: None,
            early_stop_window: None,
            early_stop_threshold: None,
            out_dir: None,
        }
    }
}

fn env_field(e: EnvError) -> HarnessError {
    match e {
        EnvError::InvalidParams { field, reason } => HarnessError::config(field, reason),
        other => HarnessError::config("env", other.to_string()),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| HarnessError::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        let text = serde_json::to_string_pretty(self).expect("config serializes");
        fs::write(path, text + "\n").map_err(|e| HarnessError::io(path, e))
    }

    pub fn tabular_params(&self) -> TabularParams {
        TabularParams {
            p1: self.p1,
            p2: self.p2,
            p3: self.p3,
            p2_int: self.p2_int,
            p3_int: self.p3_int,
            n_steps: self.n_steps,
            p_chain: self.p_chain,
        }
    }

    pub fn visual_params(&self) -> VisualParams {
        VisualParams {
            node_coords: self.node_coords,
            blur_sigma: self.blur_sigma,
            mix: self.mix,
        }
    }

    pub fn escape_params(&self) -> EscapeParams {
        EscapeParams {
            n_obs: self.n_obs,
            n_act: self.n_act,
            door_open_steps: self.door_open_steps,
            reward_door: self.reward_door,
        }
    }

    /// Checks every invariant, naming the first offending field.
    pub fn validate(&self) -> Result<(), HarnessError> {
        match (self.env, self.setting) {
            (Family::Escape, Some(_)) => {
                return Err(HarnessError::config(
                    "setting",
                    "the escape room has no setting; omit it",
                ))
            }
            (Family::Tabular | Family::Visual, None) => {
                return Err(HarnessError::config(
                    "setting",
                    format!("required for the {} environment", self.env.name()),
                ))
            }
            _ => {}
        }
        match self.env {
            Family::Tabular => self.tabular_params().validate().map_err(env_field)?,
            Family::Visual => {
                self.tabular_params().validate().map_err(env_field)?;
                self.visual_params().validate().map_err(env_field)?;
            }
            Family::Escape => self.escape_params().validate().map_err(env_field)?,
        }
        let positive = [
            ("lstm_units", self.lstm_units),
            ("fc_units", self.fc_units),
            ("trials", self.trials),
            ("workers", self.workers),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(HarnessError::config(field, "must be positive"));
            }
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::config("seeds", "at least one seed is required"));
        }
        for (field, v) in [
            ("baseline_weight", self.baseline_weight),
            ("entropy_weight", self.entropy_weight),
            ("lr", self.lr),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(HarnessError::config(field, format!("{v} must be non-negative")));
            }
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(HarnessError::config("discount", "must lie in (0, 1]"));
        }
        for (field, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(HarnessError::config(field, "must lie in [0, 1)"));
            }
        }
        if !(self.adam_eps > 0.0) {
            return Err(HarnessError::config("adam_eps", "must be positive"));
        }
        if matches!(self.max_grad_norm, Some(n) if !(n > 0.0)) {
            return Err(HarnessError::config("max_grad_norm", "must be positive"));
        }
        if self.trace_every == Some(0) {
            return Err(HarnessError::config("trace_every", "must be positive"));
        }
        match (self.early_stop_window, self.early_stop_threshold) {
            (Some(0), _) => Err(HarnessError::config("early_stop_window", "must be positive")),
            (Some(_), None) => Err(HarnessError::config(
                "early_stop_threshold",
                "required with early_stop_window",
            )),
            (None, Some(_)) => Err(HarnessError::config(
                "early_stop_window",
                "required with early_stop_threshold",
            )),
            _ => Ok(()),
        }
    }

    pub fn env_spec(&self) -> Result<EnvSpec, HarnessError> {
        self.validate()?;
        let setting = self.setting;
        Ok(match self.env {
            Family::Tabular => EnvSpec::Tabular {
                params: self.tabular_params(),
                setting: setting.expect("validated"),
            },
            Family::Visual => EnvSpec::Visual {
                params: self.tabular_params(),
                visual: self.visual_params(),
                setting: setting.expect("validated"),
            },
            Family::Escape => EnvSpec::Escape {
                params: self.escape_params(),
            },
        })
    }

    pub fn train_config(&self, seed: u64) -> Result<TrainConfig, HarnessError> {
        let mut cfg = TrainConfig::new(self.env_spec()?, self.trials, seed);
        cfg.loss = LossWeights {
            baseline_weight: self.baseline_weight,
            entropy_weight: self.entropy_weight,
            discount: self.discount,
        };
        cfg.adam = AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        };
        cfg.lstm_units = self.lstm_units;
        cfg.fc_units = self.fc_units;
        cfg.workers = self.workers;
        cfg.max_grad_norm = self.max_grad_norm;
        cfg.trace_every = self.trace_every;
        cfg.early_stop = self
            .early_stop_window
            .zip(self.early_stop_threshold)
            .map(|(window, threshold)| EarlyStop { window, threshold });
        Ok(cfg)
    }

    /// Directory name of the run: family plus setting.
    pub fn run_name(&self) -> String {
        match self.setting {
            Some(s) => format!("{}-{}", self.env.name(), s.name()),
            None => self.env.name().to_string(),
        }
    }

    /// `out_dir`, else `$CAUSAL_GYM_OUT/<run name>`, else `runs/<run name>`.
    pub fn run_dir(&self) -> PathBuf {
        if let Some(d) = &self.out_dir {
            return d.clone();
        }
        let root = std::env::var_os(OUT_ENV_VAR)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"));
        root.join(self.run_name())
    }
}
