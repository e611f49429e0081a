//! Recurrent actor-critic network.

pub mod gradcheck;
pub mod net;
pub mod params;

use rand::distributions::{Distribution, WeightedIndex};

pub use net::{
    backward, encode_input, forward_step, unroll, FrozenEpisode, Hidden, LossWeights, StepCache,
};
pub use params::{init_params, Block, GradSet, NetConfig, ParamSet, Tensors};

use crate::GymRng;

/// Draws an action from the policy probabilities.
pub fn sample_action(probs: &[f64], rng: &mut GymRng) -> usize {
    WeightedIndex::new(probs)
        .map(|d| d.sample(rng))
        .unwrap_or_else(|_| argmax(probs))
}

/// Index of the largest entry; the first one on ties.
pub fn argmax(xs: &[f64]) -> usize {
    xs.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        })
        .0
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn argmax_first_on_ties() {
        assert_eq!(argmax(&[0.2, 0.5, 0.5]), 1);
        assert_eq!(argmax(&[1.0]), 0);
    }

    #[test]
    fn sampling_frequencies() {
        let mut rng = GymRng::seed_from_u64(0);
        let probs = [0.25, 0.75];
        let n = 40_000;
        let ones = (0..n).filter(|_| sample_action(&probs, &mut rng) == 1).count();
        let f = ones as f64 / n as f64;
        assert!((f - 0.75).abs() < 4.0 * (0.75f64 * 0.25 / n as f64).sqrt());
        assert_eq!(sample_action(&[0.0, 1.0], &mut rng), 1);
    }
}
