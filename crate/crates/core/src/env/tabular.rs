//! Three-variable Bernoulli-OR causal models and their information settings.
//!
//! Two candidate structures generate the binary state `s = (s1, s2, s3)`:
//!
//! * chain:        `s1 -> s2 -> s3`, one-step lags on both edges
//! * delayed fork: `s1 -> s2` with a one-step lag, `s1 -> s3` with a two-step lag
//!
//! A node fires if its exogenous draw `y_i` fires or its parent was active at
//! the required lag. Intervention indicators `z2, z3` force `y2, y3` to one.
//! History before the first step is all zeros.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_prob, Environment, TraceStep, Transition};
use crate::error::EnvError;
use crate::GymRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    Chain,
    DelayedFork,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    /// Only `s` is observed; no interventions occur.
    Confounded,
    /// Spontaneous interventions occur but are hidden.
    Observational,
    /// Spontaneous interventions occur and `z` is appended to the observation.
    OffPolicy,
    /// The agent chooses `z`; a go cue marks the answer step.
    OnPolicy,
}

impl Setting {
    pub const ALL: [Setting; 4] = [
        Setting::Confounded,
        Setting::Observational,
        Setting::OffPolicy,
        Setting::OnPolicy,
    ];

    pub fn n_actions(self) -> usize {
        match self {
            Setting::OnPolicy => 5,
            _ => 2,
        }
    }

    pub fn obs_dim(self) -> usize {
        match self {
            Setting::Confounded | Setting::Observational => 3,
            Setting::OffPolicy => 5,
            Setting::OnPolicy => 4,
        }
    }

    /// Whether the intervention indicators are known to the observer.
    pub fn observes_z(self) -> bool {
        matches!(self, Setting::OffPolicy | Setting::OnPolicy)
    }

    pub fn name(self) -> &'static str {
        match self {
            Setting::Confounded => "confounded",
            Setting::Observational => "observational",
            Setting::OffPolicy => "offpolicy",
            Setting::OnPolicy => "onpolicy",
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Setting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "confounded" => Ok(Setting::Confounded),
            "observational" => Ok(Setting::Observational),
            "offpolicy" => Ok(Setting::OffPolicy),
            "onpolicy" => Ok(Setting::OnPolicy),
            other => Err(format!(
                "unknown setting `{other}` (expected confounded, observational, offpolicy, onpolicy)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TabularParams {
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub p2_int: f64,
    pub p3_int: f64,
    pub n_steps: usize,
    pub p_chain: f64,
}

impl Default for TabularParams {
    fn default() -> Self {
        Self {
            p1: 0.1,
            p2: 0.01,
            p3: 0.01,
            p2_int: 0.1,
            p3_int: 0.1,
            n_steps: 20,
            p_chain: 0.5,
        }
    }
}

impl TabularParams {
    pub fn validate(&self) -> Result<(), EnvError> {
        check_prob("p1", self.p1)?;
        check_prob("p2", self.p2)?;
        check_prob("p3", self.p3)?;
        check_prob("p2_int", self.p2_int)?;
        check_prob("p3_int", self.p3_int)?;
        check_prob("p_chain", self.p_chain)?;
        if self.n_steps < 3 {
            return Err(EnvError::InvalidParams {
                field: "n_steps",
                reason: format!("{} < 3; the delayed fork needs a two-step history", self.n_steps),
            });
        }
        Ok(())
    }

    /// Spontaneous activation rate of node `i` (0-based).
    pub fn spontaneous(&self, node: usize) -> f64 {
        [self.p1, self.p2, self.p3][node]
    }

    /// Intervention rate for `z2` (`k = 0`) or `z3` (`k = 1`).
    pub fn intervention(&self, k: usize) -> f64 {
        [self.p2_int, self.p3_int][k]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TabularState {
    pub s: [bool; 3],
    pub s1_prev: bool,
    pub s1_prev2: bool,
    pub s2_prev: bool,
    pub t: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExogenousDraw {
    pub y: [bool; 3],
    /// `(z2, z3)`; there is no indicator for the root node.
    pub z: [bool; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TabularAction {
    NoOp,
    SetZ2,
    SetZ3,
    AnswerA,
    AnswerB,
}

impl TabularAction {
    pub fn from_index(setting: Setting, index: usize) -> Result<Self, EnvError> {
        use TabularAction::*;
        let table: &[TabularAction] = match setting {
            Setting::OnPolicy => &[NoOp, SetZ2, SetZ3, AnswerA, AnswerB],
            _ => &[AnswerA, AnswerB],
        };
        table.get(index).copied().ok_or(EnvError::InvalidAction {
            index,
            n_actions: table.len(),
        })
    }

    pub fn index(self, setting: Setting) -> Option<usize> {
        (0..setting.n_actions()).find(|&i| TabularAction::from_index(setting, i) == Ok(self))
    }

    /// Intervention requested by this action (only meaningful before the go cue).
    pub fn intervention(self) -> [bool; 2] {
        match self {
            TabularAction::SetZ2 => [true, false],
            TabularAction::SetZ3 => [false, true],
            _ => [false, false],
        }
    }
}

/// One observed step of a trial: the state and, when the setting exposes
/// them, the intervention indicators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservedStep {
    pub s: [bool; 3],
    pub z: Option<[bool; 2]>,
}

pub fn sample_model(rng: &mut GymRng, params: &TabularParams) -> ModelKind {
    if rng.gen_bool(params.p_chain) {
        ModelKind::Chain
    } else {
        ModelKind::DelayedFork
    }
}

pub fn draw_exogenous(
    rng: &mut GymRng,
    params: &TabularParams,
    setting: Setting,
    agent_z: [bool; 2],
) -> Result<ExogenousDraw, EnvError> {
    if setting != Setting::OnPolicy && agent_z != [false, false] {
        return Err(EnvError::InterventionNotAllowed);
    }
    let z = match setting {
        Setting::Confounded => [false, false],
        Setting::Observational | Setting::OffPolicy => [
            rng.gen_bool(params.p2_int),
            rng.gen_bool(params.p3_int),
        ],
        Setting::OnPolicy => agent_z,
    };
    // Every y is drawn so the stream consumption does not depend on z.
    let spont = [
        rng.gen_bool(params.p1),
        rng.gen_bool(params.p2),
        rng.gen_bool(params.p3),
    ];
    Ok(ExogenousDraw {
        y: [spont[0], spont[1] || z[0], spont[2] || z[1]],
        z,
    })
}

/// Advances the state by one step. `y + (1 - y) * parent` on bits is `y | parent`.
pub fn step_dynamics(state: &TabularState, model: ModelKind, exo: &ExogenousDraw) -> TabularState {
    let parent3 = match model {
        ModelKind::Chain => state.s[1],
        ModelKind::DelayedFork => state.s1_prev,
    };
    TabularState {
        s: [exo.y[0], exo.y[1] || state.s[0], exo.y[2] || parent3],
        s1_prev: state.s[0],
        s1_prev2: state.s1_prev,
        s2_prev: state.s[1],
        t: state.t + 1,
    }
}

fn bit(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

pub fn make_observation(
    state: &TabularState,
    exo: &ExogenousDraw,
    setting: Setting,
    t: usize,
    n_steps: usize,
) -> Vec<f64> {
    let mut obs: Vec<f64> = state.s.iter().copied().map(bit).collect();
    match setting {
        Setting::Confounded | Setting::Observational => {}
        Setting::OffPolicy => obs.extend(exo.z.iter().copied().map(bit)),
        Setting::OnPolicy => obs.push(bit(t == n_steps + 1)),
    }
    obs
}

pub fn score_final(action: TabularAction, model: ModelKind) -> f64 {
    match (action, model) {
        (TabularAction::AnswerA, ModelKind::Chain)
        | (TabularAction::AnswerB, ModelKind::DelayedFork) => 1.0,
        _ => 0.0,
    }
}

/// Episodic runner over the tabular models.
///
/// `reset` performs the first dynamics step and returns observation `t = 1`.
/// Settings without agent interventions answer at `t = n_steps`; the
/// on-policy setting has `n_steps` intervention steps and answers at
/// `t = n_steps + 1`, where the go cue is shown.
#[derive(Debug, Clone)]
pub struct TabularEnv {
    params: TabularParams,
    setting: Setting,
    model: Option<ModelKind>,
    state: TabularState,
    exo: ExogenousDraw,
    done: bool,
    history: Vec<ObservedStep>,
    last_action: Option<TabularAction>,
    last_reward: f64,
}

impl TabularEnv {
    pub fn new(params: TabularParams, setting: Setting) -> Result<Self, EnvError> {
        params.validate()?;
        Ok(Self {
            params,
            setting,
            model: None,
            state: TabularState::default(),
            exo: ExogenousDraw::default(),
            done: false,
            history: Vec::new(),
            last_action: None,
            last_reward: 0.0,
        })
    }

    pub fn params(&self) -> &TabularParams {
        &self.params
    }

    pub fn setting(&self) -> Setting {
        self.setting
    }

    pub fn model(&self) -> Option<ModelKind> {
        self.model
    }

    pub fn state(&self) -> &TabularState {
        &self.state
    }

    pub fn exogenous(&self) -> &ExogenousDraw {
        &self.exo
    }

    /// Observed steps so far, in the form the oracle consumes.
    pub fn history(&self) -> &[ObservedStep] {
        &self.history
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Time index of the answer step.
    pub fn response_step(&self) -> usize {
        match self.setting {
            Setting::OnPolicy => self.params.n_steps + 1,
            _ => self.params.n_steps,
        }
    }

    /// Forces the model for the next trials (testing and scripted evaluation).
    pub fn reset_with_model(&mut self, rng: &mut GymRng, model: ModelKind) -> Vec<f64> {
        self.model = Some(model);
        self.state = TabularState::default();
        self.done = false;
        self.history.clear();
        self.last_action = None;
        self.last_reward = 0.0;
        self.advance(rng, [false, false])
            .expect("zero intervention is valid in every setting")
    }

    pub fn reset_typed(&mut self, rng: &mut GymRng) -> Vec<f64> {
        let model = sample_model(rng, &self.params);
        self.reset_with_model(rng, model)
    }

    fn advance(&mut self, rng: &mut GymRng, agent_z: [bool; 2]) -> Result<Vec<f64>, EnvError> {
        let model = self.model.ok_or(EnvError::NotReset)?;
        self.exo = draw_exogenous(rng, &self.params, self.setting, agent_z)?;
        self.state = step_dynamics(&self.state, model, &self.exo);
        self.history.push(ObservedStep {
            s: self.state.s,
            z: self.setting.observes_z().then_some(self.exo.z),
        });
        Ok(self.observation())
    }

    fn observation(&self) -> Vec<f64> {
        make_observation(
            &self.state,
            &self.exo,
            self.setting,
            self.state.t,
            self.params.n_steps,
        )
    }

    pub fn step_typed(
        &mut self,
        action: TabularAction,
        rng: &mut GymRng,
    ) -> Result<Transition, EnvError> {
        let model = self.model.ok_or(EnvError::NotReset)?;
        if self.done {
            return Err(EnvError::EpisodeFinished);
        }
        self.last_action = Some(action);
        if self.state.t >= self.response_step() {
            self.done = true;
            self.last_reward = score_final(action, model);
            return Ok(Transition {
                obs: self.observation(),
                reward: self.last_reward,
                done: true,
            });
        }
        let agent_z = match self.setting {
            Setting::OnPolicy => action.intervention(),
            _ => [false, false],
        };
        self.last_reward = 0.0;
        let obs = self.advance(rng, agent_z)?;
        Ok(Transition {
            obs,
            reward: 0.0,
            done: false,
        })
    }
}

impl Environment for TabularEnv {
    fn n_actions(&self) -> usize {
        self.setting.n_actions()
    }

    fn obs_dim(&self) -> usize {
        self.setting.obs_dim()
    }

    fn max_episode_len(&self) -> usize {
        self.response_step()
    }

    fn reset(&mut self, rng: &mut GymRng) -> Vec<f64> {
        self.reset_typed(rng)
    }

    fn step(&mut self, action: usize, rng: &mut GymRng) -> Result<Transition, EnvError> {
        let action = TabularAction::from_index(self.setting, action)?;
        self.step_typed(action, rng)
    }

    fn trace(&self) -> TraceStep {
        TraceStep {
            t: self.state.t,
            s: Some(self.state.s),
            z: Some(self.exo.z),
            frame: None,
            note: self.model.map(|m| format!("{m:?}")),
        }
    }
}
