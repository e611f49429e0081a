//! Exact Bayesian model comparison for the tabular settings.
//!
//! Given the history, the three nodes are conditionally independent at each
//! step, so the one-step likelihood factorizes. A node whose parent was
//! active is on with certainty; otherwise it fires at an effective
//! spontaneous rate that depends on what the observer knows about the
//! intervention indicators.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::tabular::{
    step_dynamics, ExogenousDraw, ModelKind, ObservedStep, Setting, TabularAction, TabularEnv,
    TabularParams, TabularState,
};
use crate::error::OracleError;
use crate::stats::MeanSe;
use crate::trainer::Policy;
use crate::GymRng;

/// Longest sequence accepted by [`brute_force_prob`].
pub const BRUTE_FORCE_MAX_LEN: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub p_chain: f64,
}

impl Posterior {
    pub fn p_fork(&self) -> f64 {
        1.0 - self.p_chain
    }

    /// Bayes answer; exact ties answer the chain.
    pub fn answer(&self) -> TabularAction {
        if self.p_chain >= 0.5 {
            TabularAction::AnswerA
        } else {
            TabularAction::AnswerB
        }
    }
}

/// Markov context for one step's likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepContext {
    pub s: [bool; 3],
    pub s_prev: [bool; 3],
    pub s1_prev2: bool,
    pub z: Option<[bool; 2]>,
}

fn node_logp(active: bool, parent: bool, rate: f64) -> f64 {
    match (parent, active) {
        (true, true) => 0.0,
        (true, false) => f64::NEG_INFINITY,
        (false, true) => rate.ln(),
        (false, false) => (1.0 - rate).ln(),
    }
}

/// `log P(s_t | history, model, setting)`; impossible observations give `-inf`.
pub fn step_loglik(
    ctx: &StepContext,
    model: ModelKind,
    setting: Setting,
    params: &TabularParams,
) -> Result<f64, OracleError> {
    let rate = |k: usize| -> Result<f64, OracleError> {
        let p = params.spontaneous(k + 1);
        Ok(match setting {
            Setting::Confounded => p,
            Setting::Observational => {
                let q = params.intervention(k);
                q + (1.0 - q) * p
            }
            Setting::OffPolicy | Setting::OnPolicy => {
                let z = ctx.z.ok_or(OracleError::MissingInterventions(setting))?;
                if z[k] {
                    1.0
                } else {
                    p
                }
            }
        })
    };
    let parent3 = match model {
        ModelKind::Chain => ctx.s_prev[1],
        ModelKind::DelayedFork => ctx.s1_prev2,
    };
    Ok(node_logp(ctx.s[0], false, params.p1)
        + node_logp(ctx.s[1], ctx.s_prev[0], rate(0)?)
        + node_logp(ctx.s[2], parent3, rate(1)?))
}

/// Iterates step contexts over a trial, starting from the all-zero history.
pub fn contexts(steps: &[ObservedStep]) -> impl Iterator<Item = StepContext> + '_ {
    let mut prev = [false; 3];
    let mut s1_prev2 = false;
    steps.iter().map(move |step| {
        let ctx = StepContext {
            s: step.s,
            s_prev: prev,
            s1_prev2,
            z: step.z,
        };
        s1_prev2 = prev[0];
        prev = step.s;
        ctx
    })
}

pub fn trial_loglik(
    steps: &[ObservedStep],
    model: ModelKind,
    setting: Setting,
    params: &TabularParams,
) -> Result<f64, OracleError> {
    contexts(steps).try_fold(0.0, |acc, ctx| {
        Ok(acc + step_loglik(&ctx, model, setting, params)?)
    })
}

/// Bayes rule in log space.
pub fn posterior_from_logliks(
    loglik_chain: f64,
    loglik_fork: f64,
    prior_chain: f64,
) -> Result<Posterior, OracleError> {
    let a = prior_chain.ln() + loglik_chain;
    let b = (1.0 - prior_chain).ln() + loglik_fork;
    let p_chain = match (a == f64::NEG_INFINITY, b == f64::NEG_INFINITY) {
        (true, true) => return Err(OracleError::ImpossibleSequence),
        (true, false) => 0.0,
        (false, true) => 1.0,
        (false, false) => 1.0 / (1.0 + (b - a).exp()),
    };
    Ok(Posterior { p_chain })
}

pub fn trial_posterior(
    steps: &[ObservedStep],
    setting: Setting,
    params: &TabularParams,
) -> Result<Posterior, OracleError> {
    let la = trial_loglik(steps, ModelKind::Chain, setting, params)?;
    let lb = trial_loglik(steps, ModelKind::DelayedFork, setting, params)?;
    posterior_from_logliks(la, lb, params.p_chain)
}

fn bern(p: f64, bit: bool) -> f64 {
    if bit {
        p
    } else {
        1.0 - p
    }
}

/// Exact probability of an observation sequence by enumerating every
/// exogenous assignment and running the dynamics forward.
///
/// Spontaneous bits `y` are always enumerated. Intervention bits `z` are
/// enumerated (and marginalized) in the observational setting, fixed to zero
/// when confounded, and conditioned on when observed. Branches whose
/// simulated state disagrees with the observation carry zero weight and are
/// not expanded further.
pub fn brute_force_prob(
    steps: &[ObservedStep],
    model: ModelKind,
    setting: Setting,
    params: &TabularParams,
) -> Result<f64, OracleError> {
    if steps.len() > BRUTE_FORCE_MAX_LEN {
        return Err(OracleError::SequenceTooLong {
            len: steps.len(),
            max: BRUTE_FORCE_MAX_LEN,
        });
    }
    if setting.observes_z() && steps.iter().any(|s| s.z.is_none()) {
        return Err(OracleError::MissingInterventions(setting));
    }
    Ok(enumerate(
        &TabularState::default(),
        steps,
        model,
        setting,
        params,
    ))
}

fn enumerate(
    state: &TabularState,
    rest: &[ObservedStep],
    model: ModelKind,
    setting: Setting,
    params: &TabularParams,
) -> f64 {
    let Some((obs, tail)) = rest.split_first() else {
        return 1.0;
    };
    let z_choices: Vec<([bool; 2], f64)> = match setting {
        Setting::Confounded => vec![([false, false], 1.0)],
        Setting::Observational => (0..4)
            .map(|m| {
                let z = [m & 1 == 1, m & 2 == 2];
                (z, bern(params.p2_int, z[0]) * bern(params.p3_int, z[1]))
            })
            .collect(),
        Setting::OffPolicy | Setting::OnPolicy => {
            vec![(obs.z.expect("checked by caller"), 1.0)]
        }
    };
    let mut total = 0.0;
    for (z, pz) in z_choices {
        for m in 0..8u8 {
            let spont = [m & 1 == 1, m & 2 == 2, m & 4 == 4];
            let py: f64 = (0..3).map(|i| bern(params.spontaneous(i), spont[i])).product();
            let exo = ExogenousDraw {
                y: [spont[0], spont[1] || z[0], spont[2] || z[1]],
                z,
            };
            let next = step_dynamics(state, model, &exo);
            if next.s != obs.s {
                continue;
            }
            let w = pz * py;
            if w > 0.0 {
                total += w * enumerate(&next, tail, model, setting, params);
            }
        }
    }
    total
}

/// Interventions used by the Bayes classifier when it controls `z`
/// (on-policy setting): it probes `z2` at every interaction step, which makes
/// the chain's `s2 -> s3` edge visible at every step.
pub fn probe_action() -> TabularAction {
    TabularAction::SetZ2
}

/// Generates one trial and returns its model and observed record.
pub fn simulate_trial(
    rng: &mut GymRng,
    params: &TabularParams,
    setting: Setting,
) -> Result<(ModelKind, Vec<ObservedStep>), OracleError> {
    let mut env = TabularEnv::new(*params, setting)?;
    env.reset_typed(rng);
    let interact = match setting {
        Setting::OnPolicy => probe_action(),
        _ => TabularAction::NoOp,
    };
    while env.state().t < env.response_step() {
        env.step_typed(interact, rng)?;
    }
    Ok((env.model().expect("reset sets the model"), env.history().to_vec()))
}

/// Monte-Carlo accuracy of the exact posterior classifier.
pub fn bayes_accuracy(
    params: &TabularParams,
    setting: Setting,
    n_trials: usize,
    rng: &mut GymRng,
) -> Result<MeanSe, OracleError> {
    if n_trials == 0 {
        return Err(OracleError::NoTrials);
    }
    let mut outcomes = Vec::with_capacity(n_trials);
    for _ in 0..n_trials {
        let (model, steps) = simulate_trial(rng, params, setting)?;
        let answer = trial_posterior(&steps, setting, params)?.answer();
        outcomes.push(crate::env::tabular::score_final(answer, model));
    }
    Ok(MeanSe::from_samples(&outcomes))
}

/// Paired comparison of the hidden- and observed-intervention classifiers on
/// the same generated trials (both settings share one generative process).
pub fn paired_observational_offpolicy(
    params: &TabularParams,
    n_trials: usize,
    rng: &mut GymRng,
) -> Result<(MeanSe, MeanSe, MeanSe), OracleError> {
    if n_trials == 0 {
        return Err(OracleError::NoTrials);
    }
    let (mut obs, mut off, mut diff) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..n_trials {
        let (model, steps) = simulate_trial(rng, params, Setting::OffPolicy)?;
        let hidden: Vec<ObservedStep> = steps
            .iter()
            .map(|s| ObservedStep { s: s.s, z: None })
            .collect();
        let a = trial_posterior(&hidden, Setting::Observational, params)?.answer();
        let b = trial_posterior(&steps, Setting::OffPolicy, params)?.answer();
        let ra = crate::env::tabular::score_final(a, model);
        let rb = crate::env::tabular::score_final(b, model);
        obs.push(ra);
        off.push(rb);
        diff.push(rb - ra);
    }
    Ok((
        MeanSe::from_samples(&obs),
        MeanSe::from_samples(&off),
        MeanSe::from_samples(&diff),
    ))
}

/// Agent that answers with the exact posterior (and probes `z2` on-policy).
///
/// It reconstructs the observed record from the flat observation vectors,
/// so it can be evaluated through the same path as a trained network.
#[derive(Debug, Clone)]
pub struct OraclePolicy {
    params: TabularParams,
    setting: Setting,
    record: Vec<ObservedStep>,
    pending_z: [bool; 2],
}

impl OraclePolicy {
    pub fn new(params: TabularParams, setting: Setting) -> Self {
        Self {
            params,
            setting,
            record: Vec::new(),
            pending_z: [false, false],
        }
    }
}

impl Policy for OraclePolicy {
    fn begin_episode(&mut self) {
        self.record.clear();
        self.pending_z = [false, false];
    }

    fn act(&mut self, obs: &[f64], _prev_reward: f64, _rng: &mut GymRng) -> usize {
        let bit = |i: usize| obs[i] > 0.5;
        let s = [bit(0), bit(1), bit(2)];
        let z = match self.setting {
            Setting::OffPolicy => Some([bit(3), bit(4)]),
            Setting::OnPolicy => Some(self.pending_z),
            _ => None,
        };
        self.record.push(ObservedStep { s, z });
        let answer_now = match self.setting {
            Setting::OnPolicy => bit(3),
            _ => self.record.len() >= self.params.n_steps,
        };
        let action = if answer_now {
            trial_posterior(&self.record, self.setting, &self.params)
                .map(|p| p.answer())
                .unwrap_or(TabularAction::AnswerA)
        } else if self.setting == Setting::OnPolicy {
            probe_action()
        } else {
            TabularAction::AnswerA
        };
        self.pending_z = match self.setting {
            Setting::OnPolicy if !answer_now => action.intervention(),
            _ => [false, false],
        };
        action
            .index(self.setting)
            .expect("oracle actions exist in every setting")
    }
}

/// Uniformly random observation sequence (for property tests of the oracle).
pub fn random_sequence(rng: &mut GymRng, len: usize, setting: Setting) -> Vec<ObservedStep> {
    (0..len)
        .map(|_| ObservedStep {
            s: [rng.gen(), rng.gen(), rng.gen()],
            z: setting.observes_z().then(|| [rng.gen(), rng.gen()]),
        })
        .collect()
}
