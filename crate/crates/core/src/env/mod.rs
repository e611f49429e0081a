//! Episodic environments.
//!
//! Every environment exposes its typed API (actions, states, frames) plus the
//! index-based [`Environment`] trait the trainer drives. Observations handed
//! to the agent are flat `f64` vectors; image observations are flattened in
//! row-major `(row, col, channel)` order.

pub mod escape;
pub mod frame;
pub mod tabular;
pub mod visual;

use crate::error::EnvError;
use crate::GymRng;
use frame::Frame;

pub use escape::{EscapeEnv, EscapeParams};
pub use tabular::{ModelKind, Setting, TabularEnv, TabularParams};
pub use visual::{VisualEnv, VisualParams};

/// Result of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

/// Human-inspectable record of the latest environment state, used for traces.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TraceStep {
    pub t: usize,
    /// Underlying causal variables (tabular and visual families).
    pub s: Option<[bool; 3]>,
    pub z: Option<[bool; 2]>,
    pub frame: Option<Frame>,
    pub note: Option<String>,
}

pub trait Environment: Send {
    fn n_actions(&self) -> usize;
    fn obs_dim(&self) -> usize;
    /// Upper bound on the number of actions in one episode.
    fn max_episode_len(&self) -> usize;
    fn reset(&mut self, rng: &mut GymRng) -> Vec<f64>;
    fn step(&mut self, action: usize, rng: &mut GymRng) -> Result<Transition, EnvError>;
    fn trace(&self) -> TraceStep;
}

/// Environment family plus its parameters; builds fresh instances for workers.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvSpec {
    Tabular {
        params: TabularParams,
        setting: Setting,
    },
    Visual {
        params: TabularParams,
        visual: VisualParams,
        setting: Setting,
    },
    Escape {
        params: EscapeParams,
    },
}

impl EnvSpec {
    pub fn build(&self) -> Result<Box<dyn Environment>, EnvError> {
        Ok(match self {
            EnvSpec::Tabular { params, setting } => Box::new(TabularEnv::new(*params, *setting)?),
            EnvSpec::Visual {
                params,
                visual,
                setting,
            } => Box::new(VisualEnv::new(*params, visual.clone(), *setting)?),
            EnvSpec::Escape { params } => Box::new(EscapeEnv::new(*params)?),
        })
    }

    pub fn is_image(&self) -> bool {
        !matches!(self, EnvSpec::Tabular { .. })
    }

    pub fn setting(&self) -> Option<Setting> {
        match self {
            EnvSpec::Tabular { setting, .. } | EnvSpec::Visual { setting, .. } => Some(*setting),
            EnvSpec::Escape { .. } => None,
        }
    }
}

pub(crate) fn check_prob(field: &'static str, p: f64) -> Result<(), EnvError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(EnvError::InvalidParams {
            field,
            reason: format!("{p} is not a probability"),
        })
    }
}
