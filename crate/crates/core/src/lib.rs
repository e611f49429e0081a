//! Causal-identification workbench: Bernoulli-OR causal environments (tabular,
//! pixel and escape-room), a hand-differentiated recurrent actor-critic agent,
//! and an exact Bayesian oracle for the tabular settings.

pub mod agent;
pub mod env;
pub mod error;
pub mod harness;
pub mod oracle;
pub mod stats;
pub mod trainer;

/// Seeded generator used everywhere randomness is needed.
pub type GymRng = rand_chacha::ChaCha8Rng;
