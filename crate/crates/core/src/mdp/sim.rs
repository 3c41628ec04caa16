//! Trajectory rollouts and the discounted-occupancy sampler.

use serde::{Deserialize, Serialize};

use super::{TabularCore, TabularPolicy};
use crate::error::{Error, Result};
use crate::rng::sample_categorical;

/// Hard cap on sampler loop iterations.
pub const SAMPLER_ITERATION_CAP: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Transition>,
}

/// Runs one episode: `s_0 ~ ρ`, `a_h ~ π_h(·|s_h)`, `s_{h+1} ~ P_h(·|s_h, a_h)`.
pub fn rollout<R: rand::Rng + ?Sized>(core: &TabularCore, policy: &TabularPolicy, rng: &mut R) -> Result<Trajectory> {
    let horizon = core.horizon().ok_or(Error::WrongMode { expected: "episodic" })?;
    policy.check_against(core)?;
    let mut steps = Vec::with_capacity(horizon);
    let mut s = sample_categorical(rng, core.rho());
    for h in 0..horizon {
        let a = sample_categorical(rng, policy.probs(h, s));
        let next = sample_categorical(rng, core.transition_row(h, s, a));
        steps.push(Transition { state: s, action: a, reward: core.reward(h, s, a), next_state: next });
        s = next;
    }
    Ok(Trajectory { steps })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscountedSample {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
    /// Index of the emitted step plus one, i.e. the number of next-state
    /// draws the loop made. Geometric with mean `1/(1-γ)`.
    pub draws: u64,
}

/// Draws `(s, a) ~ d^π_ρ` and `s' ~ P(·|s, a)`.
///
/// Starts from `s_0 ~ ρ`, `a_0 ~ π(·|s_0)` and keeps advancing the chain
/// while a Bernoulli(γ) coin comes up heads; on tails it draws one more next
/// state and returns the current step's tuple.
pub fn sample_discounted<R: rand::Rng + ?Sized>(
    core: &TabularCore,
    policy: &TabularPolicy,
    rng: &mut R,
) -> Result<DiscountedSample> {
    let gamma = core.gamma().ok_or(Error::WrongMode { expected: "discounted" })?;
    policy.check_against(core)?;
    let mut s = sample_categorical(rng, core.rho());
    let mut a = sample_categorical(rng, policy.probs(0, s));
    let mut h: u64 = 0;
    while rng.random_bool(gamma) {
        if h >= SAMPLER_ITERATION_CAP {
            return Err(Error::SamplerRunaway(SAMPLER_ITERATION_CAP));
        }
        s = sample_categorical(rng, core.transition_row(0, s, a));
        a = sample_categorical(rng, policy.probs(0, s));
        h += 1;
    }
    let next = sample_categorical(rng, core.transition_row(0, s, a));
    Ok(DiscountedSample { state: s, action: a, reward: core.reward(0, s, a), next_state: next, draws: h + 1 })
}
