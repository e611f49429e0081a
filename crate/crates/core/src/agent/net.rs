//! LSTM actor-critic: forward step with caches and exact backpropagation
//! through time for the A3C loss
//!
//! ```text
//! L = sum_t [ -log pi(a_t) * stopgrad(R_t - V_t) - entropy_weight * H(pi_t) ]
//!     + baseline_weight * sum_t (R_t - V_t)^2
//! ```

use serde::{Deserialize, Serialize};

use super::params::{
    Block, GradSet, ParamSet, GATE_CELL, GATE_FORGET, GATE_INPUT, GATE_OUTPUT,
};
use crate::error::NetError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub baseline_weight: f64,
    pub entropy_weight: f64,
    pub discount: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            baseline_weight: 0.05,
            entropy_weight: 0.05,
            discount: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hidden {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl Hidden {
    pub fn zeros(units: usize) -> Self {
        Self {
            h: vec![0.0; units],
            c: vec![0.0; units],
        }
    }
}

/// Everything one forward step computed; enough to backpropagate exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCache {
    pub obs: Vec<f64>,
    /// Rectified encoder output (empty without the image encoder).
    pub fc_out: Vec<f64>,
    pub input: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    /// Post-activation gates `[i, f, g, o]`, each `lstm_units` long.
    pub gates: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
    pub logits: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub probs: Vec<f64>,
    pub value: f64,
}

impl StepCache {
    pub fn hidden(&self) -> Hidden {
        Hidden {
            h: self.h.clone(),
            c: self.c.clone(),
        }
    }

    pub fn entropy(&self) -> f64 {
        entropy(&self.probs, &self.log_probs)
    }
}

/// Fixed inputs of one episode: what the agent saw, did and received.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrozenEpisode {
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub returns: Vec<f64>,
}

impl FrozenEpisode {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    /// Previous action and reward fed back at step `t`; zeros at `t = 0`.
    pub fn feedback(&self, t: usize) -> (Option<usize>, f64) {
        if t == 0 {
            (None, 0.0)
        } else {
            (Some(self.actions[t - 1]), self.rewards[t - 1])
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha * x`
#[inline]
pub(crate) fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    if alpha == 0.0 {
        return;
    }
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

pub fn entropy(probs: &[f64], log_probs: &[f64]) -> f64 {
    -probs
        .iter()
        .zip(log_probs)
        .map(|(p, lp)| if *p > 0.0 { p * lp } else { 0.0 })
        .sum::<f64>()
}

/// Builds the LSTM input `[features, one_hot(prev_action), prev_reward]`.
/// Returns the input and the encoder output (empty for vector observations).
pub fn encode_input(
    params: &ParamSet,
    obs: &[f64],
    prev_action: Option<usize>,
    prev_reward: f64,
) -> Result<(Vec<f64>, Vec<f64>), NetError> {
    let cfg = &params.config;
    if obs.len() != cfg.obs_dim {
        return Err(NetError::Shape {
            what: "observation",
            expected: cfg.obs_dim,
            got: obs.len(),
        });
    }
    if let Some(a) = prev_action {
        if a >= cfg.n_actions {
            return Err(NetError::Shape {
                what: "previous action",
                expected: cfg.n_actions,
                got: a,
            });
        }
    }
    let mut input = Vec::with_capacity(cfg.input_dim());
    let mut fc_out = Vec::new();
    if cfg.use_fc {
        let w = params.block(Block::FcW);
        let b = params.block(Block::FcB);
        fc_out = (0..cfg.fc_units)
            .map(|k| (b[k] + dot(&w[k * cfg.obs_dim..(k + 1) * cfg.obs_dim], obs)).max(0.0))
            .collect();
        input.extend_from_slice(&fc_out);
    } else {
        input.extend_from_slice(obs);
    }
    let start = input.len();
    input.resize(start + cfg.n_actions, 0.0);
    if let Some(a) = prev_action {
        input[start + a] = 1.0;
    }
    input.push(prev_reward);
    Ok((input, fc_out))
}

/// One LSTM step followed by the policy and value heads.
pub fn forward_step(
    params: &ParamSet,
    obs: &[f64],
    prev_action: Option<usize>,
    prev_reward: f64,
    hidden: &Hidden,
) -> Result<StepCache, NetError> {
    let cfg = &params.config;
    let h_units = cfg.lstm_units;
    let (input, fc_out) = encode_input(params, obs, prev_action, prev_reward)?;
    let in_dim = input.len();

    let wx = params.block(Block::LstmWx);
    let wh = params.block(Block::LstmWh);
    let bias = params.block(Block::LstmB);
    let mut gates = vec![0.0; 4 * h_units];
    for (r, gate) in gates.iter_mut().enumerate() {
        let pre = bias[r]
            + dot(&wx[r * in_dim..(r + 1) * in_dim], &input)
            + dot(&wh[r * h_units..(r + 1) * h_units], &hidden.h);
        *gate = if r / h_units == GATE_CELL {
            pre.tanh()
        } else {
            sigmoid(pre)
        };
    }
    let gate = |g: usize, j: usize| gates[g * h_units + j];
    let c: Vec<f64> = (0..h_units)
        .map(|j| gate(GATE_FORGET, j) * hidden.c[j] + gate(GATE_INPUT, j) * gate(GATE_CELL, j))
        .collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h: Vec<f64> = (0..h_units)
        .map(|j| gate(GATE_OUTPUT, j) * tanh_c[j])
        .collect();

    let pw = params.block(Block::PolicyW);
    let pb = params.block(Block::PolicyB);
    let logits: Vec<f64> = (0..cfg.n_actions)
        .map(|a| pb[a] + dot(&pw[a * h_units..(a + 1) * h_units], &h))
        .collect();
    let value = params.block(Block::ValueB)[0] + dot(params.block(Block::ValueW), &h);
    if !value.is_finite() || logits.iter().any(|z| !z.is_finite()) {
        return Err(NetError::NonFinite);
    }
    let log_probs = log_softmax(&logits);
    let probs = log_probs.iter().map(|v| v.exp()).collect();
    Ok(StepCache {
        obs: obs.to_vec(),
        fc_out,
        input,
        h_prev: hidden.h.clone(),
        c_prev: hidden.c.clone(),
        gates,
        c,
        tanh_c,
        h,
        logits,
        log_probs,
        probs,
        value,
    })
}

/// Replays an episode from a zero hidden state.
pub fn unroll(params: &ParamSet, episode: &FrozenEpisode) -> Result<Vec<StepCache>, NetError> {
    let mut hidden = Hidden::zeros(params.config.lstm_units);
    let mut caches = Vec::with_capacity(episode.len());
    for (t, obs) in episode.obs.iter().enumerate() {
        let (prev_a, prev_r) = episode.feedback(t);
        let cache = forward_step(params, obs, prev_a, prev_r, &hidden)?;
        hidden = cache.hidden();
        caches.push(cache);
    }
    Ok(caches)
}

/// Exact gradient of the episode loss, given the caches of its forward pass.
/// Returns the gradient and the loss value.
pub fn backward(
    params: &ParamSet,
    caches: &[StepCache],
    episode: &FrozenEpisode,
    weights: &LossWeights,
) -> Result<(GradSet, f64), NetError> {
    if caches.is_empty() {
        return Err(NetError::EmptyRollout);
    }
    if caches.len() != episode.len() || episode.returns.len() != episode.len() {
        return Err(NetError::Shape {
            what: "rollout caches",
            expected: episode.len(),
            got: caches.len(),
        });
    }
    let cfg = params.config;
    let hu = cfg.lstm_units;
    let n_act = cfg.n_actions;
    let in_dim = cfg.input_dim();
    let feat = cfg.feature_dim();

    let mut grad = GradSet::zeros(cfg);
    let r_pw = grad.layout().range(Block::PolicyW);
    let r_pb = grad.layout().range(Block::PolicyB);
    let r_vw = grad.layout().range(Block::ValueW);
    let r_vb = grad.layout().range(Block::ValueB);
    let r_wx = grad.layout().range(Block::LstmWx);
    let r_wh = grad.layout().range(Block::LstmWh);
    let r_b = grad.layout().range(Block::LstmB);
    let r_fw = grad.layout().range(Block::FcW);
    let r_fb = grad.layout().range(Block::FcB);

    let pw = params.block(Block::PolicyW);
    let vw = params.block(Block::ValueW);
    let wx = params.block(Block::LstmWx);
    let wh = params.block(Block::LstmWh);

    let mut dh_next = vec![0.0; hu];
    let mut dc_next = vec![0.0; hu];
    let mut dz = vec![0.0; n_act];
    let mut da = vec![0.0; 4 * hu];
    let mut dfeat = vec![0.0; feat];
    let mut loss = 0.0;

    for t in (0..caches.len()).rev() {
        let c = &caches[t];
        let action = episode.actions[t];
        let adv = episode.returns[t] - c.value;
        let ent = c.entropy();
        loss += -c.log_probs[action] * adv - weights.entropy_weight * ent
            + weights.baseline_weight * adv * adv;

        for j in 0..n_act {
            let onehot = if j == action { 1.0 } else { 0.0 };
            dz[j] = adv * (c.probs[j] - onehot)
                + weights.entropy_weight * c.probs[j] * (c.log_probs[j] + ent);
        }
        let dv = -2.0 * weights.baseline_weight * adv;

        let g = &mut grad.data;
        for j in 0..n_act {
            axpy(&mut g[r_pw.start + j * hu..r_pw.start + (j + 1) * hu], dz[j], &c.h);
            g[r_pb.start + j] += dz[j];
        }
        axpy(&mut g[r_vw.clone()], dv, &c.h);
        g[r_vb.start] += dv;

        let mut dh = std::mem::take(&mut dh_next);
        for j in 0..n_act {
            axpy(&mut dh, dz[j], &pw[j * hu..(j + 1) * hu]);
        }
        axpy(&mut dh, dv, vw);

        let gate = |k: usize, j: usize| c.gates[k * hu + j];
        for j in 0..hu {
            let (i_g, f_g, c_g, o_g) = (
                gate(GATE_INPUT, j),
                gate(GATE_FORGET, j),
                gate(GATE_CELL, j),
                gate(GATE_OUTPUT, j),
            );
            let d_o = dh[j] * c.tanh_c[j];
            let dc = dh[j] * o_g * (1.0 - c.tanh_c[j] * c.tanh_c[j]) + dc_next[j];
            da[GATE_INPUT * hu + j] = dc * c_g * i_g * (1.0 - i_g);
            da[GATE_FORGET * hu + j] = dc * c.c_prev[j] * f_g * (1.0 - f_g);
            da[GATE_CELL * hu + j] = dc * i_g * (1.0 - c_g * c_g);
            da[GATE_OUTPUT * hu + j] = d_o * o_g * (1.0 - o_g);
            dc_next[j] = dc * f_g;
        }

        dh_next = vec![0.0; hu];
        dfeat.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..4 * hu {
            let d = da[r];
            if d == 0.0 {
                continue;
            }
            axpy(&mut g[r_wx.start + r * in_dim..r_wx.start + (r + 1) * in_dim], d, &c.input);
            axpy(&mut g[r_wh.start + r * hu..r_wh.start + (r + 1) * hu], d, &c.h_prev);
            g[r_b.start + r] += d;
            axpy(&mut dh_next, d, &wh[r * hu..(r + 1) * hu]);
            if cfg.use_fc {
                axpy(&mut dfeat, d, &wx[r * in_dim..r * in_dim + feat]);
            }
        }

        if cfg.use_fc {
            let od = cfg.obs_dim;
            for k in 0..feat {
                if c.fc_out[k] <= 0.0 {
                    continue;
                }
                let d = dfeat[k];
                axpy(&mut g[r_fw.start + k * od..r_fw.start + (k + 1) * od], d, &c.obs);
                g[r_fb.start + k] += d;
            }
        }
    }
    Ok((grad, loss))
}
