//! Central-difference gradient checking against [`backward`].
//!
//! The numeric side uses its own straightforward forward pass, generic over
//! the float type and evaluated in double-double arithmetic, so round-off in
//! the loss stays far below the finite-difference signal even for gradients
//! near the `1e-8` relative-error floor.

use num_traits::Float;
use rand::seq::index::sample;
use twofloat::TwoFloat;

use super::net::{backward, unroll, FrozenEpisode, LossWeights};
use super::params::{Block, ParamSet, GATE_CELL};
use crate::error::NetError;
use crate::GymRng;

#[derive(Debug, Clone)]
pub struct GradCheckEntry {
    pub index: usize,
    pub block: Block,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.entries.iter().map(|e| e.rel_error).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&GradCheckEntry> {
        self.entries
            .iter()
            .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }
}

/// `|a - n| / max(|a|, |n|, floor)`
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn lit<F: Float>(x: f64) -> F {
    F::from(x).expect("finite literal")
}

fn dot<F: Float>(w: &[F], x: &[F]) -> F {
    w.iter().zip(x).fold(F::zero(), |acc, (&a, &b)| acc + a * b)
}

/// Episode loss with frozen advantages, evaluated from scratch in `F`.
pub fn reference_loss<F: Float>(
    params: &ParamSet,
    theta: &[F],
    episode: &FrozenEpisode,
    advantages: &[f64],
    weights: &LossWeights,
) -> F {
    let cfg = params.config;
    let layout = params.layout();
    let blk = |b: Block| &theta[layout.range(b)];
    let (hu, od, na) = (cfg.lstm_units, cfg.obs_dim, cfg.n_actions);
    let in_dim = cfg.input_dim();

    let mut h = vec![F::zero(); hu];
    let mut c = vec![F::zero(); hu];
    let mut loss = F::zero();
    for t in 0..episode.len() {
        let obs: Vec<F> = episode.obs[t].iter().map(|&v| lit(v)).collect();
        let mut x: Vec<F> = if cfg.use_fc {
            (0..cfg.fc_units)
                .map(|k| {
                    let pre = blk(Block::FcB)[k] + dot(&blk(Block::FcW)[k * od..(k + 1) * od], &obs);
                    pre.max(F::zero())
                })
                .collect()
        } else {
            obs
        };
        let (prev_a, prev_r) = episode.feedback(t);
        for a in 0..na {
            x.push(if prev_a == Some(a) { F::one() } else { F::zero() });
        }
        x.push(lit(prev_r));

        let gate: Vec<F> = (0..4 * hu)
            .map(|r| {
                let pre = blk(Block::LstmB)[r]
                    + dot(&blk(Block::LstmWx)[r * in_dim..(r + 1) * in_dim], &x)
                    + dot(&blk(Block::LstmWh)[r * hu..(r + 1) * hu], &h);
                if r / hu == GATE_CELL {
                    pre.tanh()
                } else {
                    F::one() / (F::one() + (-pre).exp())
                }
            })
            .collect();
        for j in 0..hu {
            c[j] = gate[hu + j] * c[j] + gate[j] * gate[2 * hu + j];
            h[j] = gate[3 * hu + j] * c[j].tanh();
        }

        let logits: Vec<F> = (0..na)
            .map(|a| blk(Block::PolicyB)[a] + dot(&blk(Block::PolicyW)[a * hu..(a + 1) * hu], &h))
            .collect();
        let value = blk(Block::ValueB)[0] + dot(blk(Block::ValueW), &h);
        let max = logits.iter().fold(F::neg_infinity(), |m, &z| m.max(z));
        let lse = max + logits.iter().fold(F::zero(), |s, &z| s + (z - max).exp()).ln();
        let logp: Vec<F> = logits.iter().map(|&z| z - lse).collect();
        let ent = -logp.iter().fold(F::zero(), |s, &lp| s + lp.exp() * lp);
        let resid = lit::<F>(episode.returns[t]) - value;
        loss = loss - logp[episode.actions[t]] * lit(advantages[t])
            - lit::<F>(weights.entropy_weight) * ent
            + lit::<F>(weights.baseline_weight) * resid * resid;
    }
    loss
}

/// Compares analytic and numeric gradients on `n_samples` random parameters.
/// Advantages are frozen at the unperturbed forward pass.
pub fn grad_check(
    params: &ParamSet,
    episode: &FrozenEpisode,
    weights: &LossWeights,
    epsilon: f64,
    n_samples: usize,
    rng: &mut GymRng,
) -> Result<GradCheckReport, NetError> {
    let caches = unroll(params, episode)?;
    let advantages: Vec<f64> = caches
        .iter()
        .zip(&episode.returns)
        .map(|(c, r)| r - c.value)
        .collect();
    let (grad, _) = backward(params, &caches, episode, weights)?;

    let n = n_samples.min(params.len());
    let mut theta: Vec<TwoFloat> = params.data.iter().map(|&v| TwoFloat::from(v)).collect();
    let eps = TwoFloat::from(epsilon);
    let mut entries = Vec::with_capacity(n);
    for index in sample(rng, params.len(), n) {
        let orig = theta[index];
        theta[index] = orig + eps;
        let up = reference_loss(params, &theta, episode, &advantages, weights);
        theta[index] = orig - eps;
        let down = reference_loss(params, &theta, episode, &advantages, weights);
        theta[index] = orig;
        let numeric = f64::from((up - down) / (eps * 2.0));
        if !numeric.is_finite() {
            return Err(NetError::NonFinite);
        }
        let analytic = grad.data[index];
        entries.push(GradCheckEntry {
            index,
            block: params.layout().block_of(index),
            analytic,
            numeric,
            rel_error: relative_error(analytic, numeric, 1e-8),
        });
    }
    Ok(GradCheckReport { entries })
}
