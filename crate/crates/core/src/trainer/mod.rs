//! Episode collection, A3C gradients and the multi-worker training loop.
//!
//! Workers share one parameter set behind a mutex. Each worker snapshots the
//! parameters, plays one episode, differentiates the loss on its snapshot and
//! hands the gradient back; the update is applied under the lock so no worker
//! ever reads a half-written parameter vector.

pub mod adam;

use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::{adam_update, AdamConfig, AdamState};
pub use crate::agent::LossWeights;

use crate::agent::{
    argmax, backward, forward_step, init_params, sample_action, FrozenEpisode, GradSet, Hidden,
    NetConfig, ParamSet, StepCache,
};
use crate::env::{EnvSpec, Environment, TraceStep};
use crate::error::{NetError, TrainError};
use crate::stats::MeanSe;
use crate::GymRng;

/// Anything that can play an episode one observation at a time.
pub trait Policy {
    fn begin_episode(&mut self);
    fn act(&mut self, obs: &[f64], prev_reward: f64, rng: &mut GymRng) -> usize;
}

/// `R_t = r_t + discount * R_{t+1}`, zero past the end.
pub fn compute_returns(rewards: &[f64], discount: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + discount * acc;
        out[t] = acc;
    }
    out
}

/// One environment state together with the action taken from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub state: TraceStep,
    pub action: Option<usize>,
    pub reward: f64,
}

#[derive(Debug, Clone)]
pub struct EpisodeRollout {
    /// Observations, actions, rewards and discounted returns.
    pub episode: FrozenEpisode,
    pub caches: Vec<StepCache>,
    pub dones: Vec<bool>,
    pub trace: Option<Vec<TraceRecord>>,
}

impl EpisodeRollout {
    pub fn len(&self) -> usize {
        self.episode.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episode.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.episode.rewards.iter().sum()
    }

    pub fn log_prob(&self, t: usize) -> f64 {
        self.caches[t].log_probs[self.episode.actions[t]]
    }

    pub fn values(&self) -> Vec<f64> {
        self.caches.iter().map(|c| c.value).collect()
    }

    /// Gradient of the episode loss and the loss itself.
    pub fn backward(
        &self,
        params: &ParamSet,
        weights: &LossWeights,
    ) -> Result<(GradSet, f64), NetError> {
        backward(params, &self.caches, &self.episode, weights)
    }
}

/// Plays one episode with actions sampled from the policy.
pub fn collect_episode(
    env: &mut dyn Environment,
    params: &ParamSet,
    rng: &mut GymRng,
    discount: f64,
    record_trace: bool,
) -> Result<EpisodeRollout, TrainError> {
    let mut obs = env.reset(rng);
    let mut hidden = Hidden::zeros(params.config.lstm_units);
    let mut episode = FrozenEpisode::default();
    let mut caches = Vec::new();
    let mut dones = Vec::new();
    let mut trace = record_trace.then(Vec::new);
    loop {
        let (prev_a, prev_r) = episode.feedback(episode.len());
        let cache = forward_step(params, &obs, prev_a, prev_r, &hidden)?;
        let action = sample_action(&cache.probs, rng);
        hidden = cache.hidden();
        let state = trace.as_ref().map(|_| env.trace());
        let tr = env.step(action, rng)?;
        if let (Some(trace), Some(state)) = (trace.as_mut(), state) {
            trace.push(TraceRecord {
                state,
                action: Some(action),
                reward: tr.reward,
            });
        }
        episode.obs.push(std::mem::replace(&mut obs, tr.obs));
        episode.actions.push(action);
        episode.rewards.push(tr.reward);
        caches.push(cache);
        dones.push(tr.done);
        if tr.done {
            break;
        }
    }
    if let Some(trace) = trace.as_mut() {
        trace.push(TraceRecord {
            state: env.trace(),
            action: None,
            reward: 0.0,
        });
    }
    episode.returns = compute_returns(&episode.rewards, discount);
    Ok(EpisodeRollout {
        episode,
        caches,
        dones,
        trace,
    })
}

/// Stop once the mean of the last `window` rewards reaches `threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    pub window: usize,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub env: EnvSpec,
    pub loss: LossWeights,
    pub adam: AdamConfig,
    pub lstm_units: usize,
    pub fc_units: usize,
    pub trials: usize,
    pub seed: u64,
    pub workers: usize,
    pub max_grad_norm: Option<f64>,
    pub early_stop: Option<EarlyStop>,
    /// Record a full trace for every trial index divisible by this.
    pub trace_every: Option<usize>,
}

impl TrainConfig {
    pub fn new(env: EnvSpec, trials: usize, seed: u64) -> Self {
        Self {
            env,
            loss: LossWeights::default(),
            adam: AdamConfig::default(),
            lstm_units: 48,
            fc_units: 64,
            trials,
            seed,
            workers: 4,
            max_grad_norm: None,
            early_stop: None,
            trace_every: None,
        }
    }

    pub fn net_config(&self) -> Result<NetConfig, TrainError> {
        let env = self.env.build()?;
        let base = if self.env.is_image() {
            NetConfig::image(env.obs_dim(), env.n_actions())
        } else {
            NetConfig::vector(env.obs_dim(), env.n_actions())
        };
        let cfg = NetConfig {
            lstm_units: self.lstm_units,
            fc_units: self.fc_units,
            ..base
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.into()));
        if self.workers == 0 {
            return bad("workers must be at least 1");
        }
        if self.loss.baseline_weight < 0.0 || self.loss.entropy_weight < 0.0 {
            return bad("loss weights must be non-negative");
        }
        if !(self.loss.discount > 0.0 && self.loss.discount <= 1.0) {
            return bad("discount must lie in (0, 1]");
        }
        if !(self.adam.lr >= 0.0) {
            return bad("learning rate must be non-negative");
        }
        if matches!(self.max_grad_norm, Some(n) if !(n > 0.0)) {
            return bad("max_grad_norm must be positive");
        }
        if matches!(self.early_stop, Some(e) if e.window == 0) {
            return bad("early-stop window must be positive");
        }
        if self.trace_every == Some(0) {
            return bad("trace_every must be positive");
        }
        self.net_config().map(|_| ())
    }
}

/// One point of a learning curve; `trial` counts from 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub trial: usize,
    pub reward: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ParamSet,
    /// Sorted by trial index.
    pub curve: Vec<CurveRecord>,
    pub traces: Vec<(usize, Vec<TraceRecord>)>,
    pub skipped_updates: usize,
    pub stopped_early: bool,
}

impl TrainOutcome {
    pub fn rewards(&self) -> Vec<f64> {
        self.curve.iter().map(|r| r.reward).collect()
    }
}

struct Learner {
    params: ParamSet,
    adam: AdamState,
    curve: Vec<CurveRecord>,
    traces: Vec<(usize, Vec<TraceRecord>)>,
    next_trial: usize,
    skipped: usize,
    window_sum: f64,
    stop: bool,
    stopped_early: bool,
    error: Option<TrainError>,
}

/// RNG for worker `w` (stream `w + 1`); stream 0 initialises the parameters.
pub fn worker_rng(seed: u64, worker: usize) -> GymRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(worker as u64 + 1);
    rng
}

/// Trains and returns the outcome, or the first error once every worker stopped.
pub fn train(config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    match train_partial(config)? {
        (outcome, None) => Ok(outcome),
        (_, Some(err)) => Err(err),
    }
}

/// Like [`train`] but hands back everything recorded before a worker failure.
pub fn train_partial(
    config: &TrainConfig,
) -> Result<(TrainOutcome, Option<TrainError>), TrainError> {
    config.validate()?;
    let net = config.net_config()?;
    let params = init_params(&mut ChaCha8Rng::seed_from_u64(config.seed), net);
    let learner = Mutex::new(Learner {
        adam: AdamState::new(params.len()),
        params,
        curve: Vec::with_capacity(config.trials),
        traces: Vec::new(),
        next_trial: 0,
        skipped: 0,
        window_sum: 0.0,
        stop: false,
        stopped_early: false,
        error: None,
    });

    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..config.workers)
            .map(|w| {
                let learner = &learner;
                scope.spawn(move || {
                    if let Err(e) = run_worker(w, config, learner) {
                        let mut l = lock(learner);
                        l.stop = true;
                        l.error.get_or_insert(e);
                    }
                })
            })
            .collect();
        for (w, h) in handles.into_iter().enumerate() {
            if let Err(panic) = h.join() {
                let message = panic
                    .downcast_ref::<&str>()
                    .map(|s| s.to_string())
                    .or_else(|| panic.downcast_ref::<String>().cloned())
                    .unwrap_or_else(|| "panic".into());
                let mut l = lock(&learner);
                l.stop = true;
                l.error.get_or_insert(TrainError::Worker { worker: w, message });
            }
        }
    });

    let mut l = learner.into_inner().unwrap_or_else(|p| p.into_inner());
    l.curve.sort_by_key(|r| r.trial);
    l.traces.sort_by_key(|(t, _)| *t);
    Ok((
        TrainOutcome {
            params: l.params,
            curve: l.curve,
            traces: l.traces,
            skipped_updates: l.skipped,
            stopped_early: l.stopped_early,
        },
        l.error,
    ))
}

fn lock(m: &Mutex<Learner>) -> std::sync::MutexGuard<'_, Learner> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

fn run_worker(w: usize, config: &TrainConfig, learner: &Mutex<Learner>) -> Result<(), TrainError> {
    let mut env = config.env.build()?;
    let mut rng = worker_rng(config.seed, w);
    loop {
        let (snapshot, trial) = {
            let mut l = lock(learner);
            if l.stop || l.next_trial >= config.trials {
                return Ok(());
            }
            l.next_trial += 1;
            (l.params.clone(), l.next_trial - 1)
        };
        let record = config.trace_every.is_some_and(|k| trial % k == 0);
        let rollout = collect_episode(env.as_mut(), &snapshot, &mut rng, config.loss.discount, record)?;
        let (mut grad, _) = rollout.backward(&snapshot, &config.loss)?;
        if let Some(max) = config.max_grad_norm {
            let norm = grad.l2_norm();
            if norm > max {
                grad.scale(max / norm);
            }
        }
        let reward = rollout.total_reward();

        let mut l = lock(learner);
        let l = &mut *l;
        match adam_update(&mut l.params, &grad, &mut l.adam, &config.adam) {
            Ok(()) => {}
            Err(TrainError::NonFiniteGradient) => {
                log::warn!("trial {trial}: non-finite gradient, update skipped");
                l.skipped += 1;
            }
            Err(e) => return Err(e),
        }
        l.curve.push(CurveRecord { trial, reward });
        if let Some(trace) = rollout.trace {
            l.traces.push((trial, trace));
        }
        if let Some(es) = config.early_stop {
            let n = l.curve.len();
            l.window_sum += reward;
            if n > es.window {
                l.window_sum -= l.curve[n - 1 - es.window].reward;
            }
            if n >= es.window && l.window_sum / es.window as f64 >= es.threshold {
                l.stop = true;
                l.stopped_early = true;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Sample,
    Argmax,
}

/// The network as a [`Policy`], carrying its recurrent state between calls.
#[derive(Debug, Clone)]
pub struct NetworkPolicy<'a> {
    params: &'a ParamSet,
    mode: EvalMode,
    hidden: Hidden,
    prev_action: Option<usize>,
}

impl<'a> NetworkPolicy<'a> {
    pub fn new(params: &'a ParamSet, mode: EvalMode) -> Self {
        Self {
            params,
            mode,
            hidden: Hidden::zeros(params.config.lstm_units),
            prev_action: None,
        }
    }
}

impl Policy for NetworkPolicy<'_> {
    fn begin_episode(&mut self) {
        self.hidden = Hidden::zeros(self.params.config.lstm_units);
        self.prev_action = None;
    }

    fn act(&mut self, obs: &[f64], prev_reward: f64, rng: &mut GymRng) -> usize {
        let cache = forward_step(self.params, obs, self.prev_action, prev_reward, &self.hidden)
            .expect("observation shape matches the network");
        let a = match self.mode {
            EvalMode::Sample => sample_action(&cache.probs, rng),
            EvalMode::Argmax => argmax(&cache.probs),
        };
        self.hidden = cache.hidden();
        self.prev_action = Some(a);
        a
    }
}

/// Mean episode reward of `policy` over `n_trials` fresh episodes.
pub fn evaluate_policy(
    policy: &mut dyn Policy,
    env: &EnvSpec,
    n_trials: usize,
    rng: &mut GymRng,
) -> Result<MeanSe, TrainError> {
    if n_trials == 0 {
        return Err(TrainError::Config("n_trials must be positive".into()));
    }
    let mut env = env.build()?;
    let mut totals = Vec::with_capacity(n_trials);
    for _ in 0..n_trials {
        policy.begin_episode();
        let mut obs = env.reset(rng);
        let mut prev_reward = 0.0;
        let mut total = 0.0;
        loop {
            let a = policy.act(&obs, prev_reward, rng);
            let tr = env.step(a, rng)?;
            total += tr.reward;
            prev_reward = tr.reward;
            obs = tr.obs;
            if tr.done {
                break;
            }
        }
        totals.push(total);
    }
    Ok(MeanSe::from_samples(&totals))
}

/// Frozen-parameter evaluation of a network.
pub fn evaluate(
    params: &ParamSet,
    env: &EnvSpec,
    n_trials: usize,
    rng: &mut GymRng,
    mode: EvalMode,
) -> Result<MeanSe, TrainError> {
    evaluate_policy(&mut NetworkPolicy::new(params, mode), env, n_trials, rng)
}
