//! Finite MDPs: the tabular ground truth every exact computation runs on.

mod dp;
mod instances;
mod io;
mod linear;
mod sim;

pub use dp::{argmax_lowest, optimal_values, policy_values, visitation, OptimalValues, Values, VisitationTable};
pub use instances::{make_instance, InstanceKind};
pub use linear::{LinearMdp, RealizationError};
pub use sim::{rollout, sample_discounted, DiscountedSample, Trajectory, Transition, SAMPLER_ITERATION_CAP};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when validating that a vector is a probability distribution.
pub const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Mode {
    Episodic { horizon: usize },
    Discounted { gamma: f64 },
}

/// Ground-truth finite MDP.
///
/// Episodic instances carry one reward table and one transition kernel per
/// step; discounted instances carry a single stationary pair, stored as
/// "step 0". Tables are flat and row-major: rewards are indexed
/// `[step][s][a]`, transitions `[step][s][a][s']`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularCore {
    num_states: usize,
    num_actions: usize,
    mode: Mode,
    reward: Vec<f64>,
    transition: Vec<f64>,
    rho: Vec<f64>,
}

pub(crate) fn check_distribution(row: &[f64], what: impl Fn() -> String) -> Result<()> {
    let mut sum = 0.0;
    for &p in row {
        if !(p >= 0.0) || !p.is_finite() {
            return Err(Error::InvalidInstance(format!("{}: entry {p} is not a probability", what())));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::InvalidInstance(format!("{}: sums to {sum}", what())));
    }
    Ok(())
}

impl TabularCore {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        mode: Mode,
        reward: Vec<f64>,
        transition: Vec<f64>,
        rho: Vec<f64>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::InvalidInstance("state and action counts must be positive".into()));
        }
        let steps = match mode {
            Mode::Episodic { horizon } => {
                if horizon == 0 {
                    return Err(Error::InvalidInstance("horizon must be positive".into()));
                }
                horizon
            }
            Mode::Discounted { gamma } => {
                if !(0.0..1.0).contains(&gamma) {
                    return Err(Error::InvalidInstance(format!("discount {gamma} outside [0, 1)")));
                }
                1
            }
        };
        let pairs = num_states * num_actions;
        if reward.len() != steps * pairs {
            return Err(Error::Dimension { expected: steps * pairs, got: reward.len() });
        }
        if transition.len() != steps * pairs * num_states {
            return Err(Error::Dimension { expected: steps * pairs * num_states, got: transition.len() });
        }
        if rho.len() != num_states {
            return Err(Error::Dimension { expected: num_states, got: rho.len() });
        }
        if let Some(bad) = reward.iter().position(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::InvalidInstance(format!("reward entry {bad} = {} outside [0, 1]", reward[bad])));
        }
        for (row_index, row) in transition.chunks(num_states).enumerate() {
            check_distribution(row, || format!("transition row {row_index}"))?;
        }
        check_distribution(&rho, || "initial distribution".to_string())?;
        Ok(Self { num_states, num_actions, mode, reward, transition, rho })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_pairs(&self) -> usize {
        self.num_states * self.num_actions
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Number of stored reward/transition tables: `H` when episodic, 1 when
    /// discounted.
    pub fn num_steps(&self) -> usize {
        match self.mode {
            Mode::Episodic { horizon } => horizon,
            Mode::Discounted { .. } => 1,
        }
    }

    pub fn horizon(&self) -> Option<usize> {
        match self.mode {
            Mode::Episodic { horizon } => Some(horizon),
            Mode::Discounted { .. } => None,
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match self.mode {
            Mode::Episodic { .. } => None,
            Mode::Discounted { gamma } => Some(gamma),
        }
    }

    pub fn is_discounted(&self) -> bool {
        matches!(self.mode, Mode::Discounted { .. })
    }

    /// The step whose Q-function feeds the Bellman target of step `h`.
    /// `None` past the last episodic step.
    pub fn next_step(&self, h: usize) -> Option<usize> {
        match self.mode {
            Mode::Episodic { horizon } => (h + 1 < horizon).then_some(h + 1),
            Mode::Discounted { .. } => Some(0),
        }
    }

    /// Multiplier on next-step values in a Bellman target (1 or γ).
    pub fn target_discount(&self) -> f64 {
        match self.mode {
            Mode::Episodic { .. } => 1.0,
            Mode::Discounted { gamma } => gamma,
        }
    }

    /// Largest attainable |Q| at step `h`: `H - h` episodic, `1/(1-γ)`
    /// discounted.
    pub fn value_bound(&self, h: usize) -> f64 {
        match self.mode {
            Mode::Episodic { horizon } => horizon.saturating_sub(h) as f64,
            Mode::Discounted { gamma } => 1.0 / (1.0 - gamma),
        }
    }

    #[inline]
    pub fn pair(&self, s: usize, a: usize) -> usize {
        s * self.num_actions + a
    }

    #[inline]
    pub fn reward(&self, h: usize, s: usize, a: usize) -> f64 {
        self.reward[h * self.num_pairs() + self.pair(s, a)]
    }

    /// Reward table of step `h`, indexed by pair.
    pub fn step_rewards(&self, h: usize) -> &[f64] {
        let n = self.num_pairs();
        &self.reward[h * n..(h + 1) * n]
    }

    #[inline]
    pub fn transition_row(&self, h: usize, s: usize, a: usize) -> &[f64] {
        let start = (h * self.num_pairs() + self.pair(s, a)) * self.num_states;
        &self.transition[start..start + self.num_states]
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    /// Flat `[step][s][a]` reward table.
    pub fn rewards_flat(&self) -> &[f64] {
        &self.reward
    }

    /// Flat `[step][s][a][s']` transition table.
    pub fn transitions_flat(&self) -> &[f64] {
        &self.transition
    }

    pub(crate) fn check_step(&self, h: usize) -> Result<()> {
        if h >= self.num_steps() {
            return Err(Error::OutOfRange { what: "step", index: h, limit: self.num_steps() });
        }
        Ok(())
    }

    pub(crate) fn check_state_action(&self, s: usize, a: usize) -> Result<()> {
        if s >= self.num_states {
            return Err(Error::OutOfRange { what: "state", index: s, limit: self.num_states });
        }
        if a >= self.num_actions {
            return Err(Error::OutOfRange { what: "action", index: a, limit: self.num_actions });
        }
        Ok(())
    }
}

/// Explicit per-step action distributions `π_h(a|s)`, indexed
/// `[step][s][a]`. Discounted instances use a single stationary step.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    num_steps: usize,
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl TabularPolicy {
    pub fn new(num_steps: usize, num_states: usize, num_actions: usize, probs: Vec<f64>) -> Result<Self> {
        let expected = num_steps * num_states * num_actions;
        if probs.len() != expected {
            return Err(Error::Dimension { expected, got: probs.len() });
        }
        for (row, chunk) in probs.chunks(num_actions).enumerate() {
            check_distribution(chunk, || format!("policy row {row}"))
                .map_err(|e| Error::InvalidPolicy(e.to_string()))?;
        }
        Ok(Self { num_steps, num_states, num_actions, probs })
    }

    /// Builds a policy row by row from `f(h, s) -> distribution over A`.
    pub fn from_fn(core: &TabularCore, mut f: impl FnMut(usize, usize) -> Vec<f64>) -> Result<Self> {
        let mut probs = Vec::with_capacity(core.num_steps() * core.num_pairs());
        for h in 0..core.num_steps() {
            for s in 0..core.num_states() {
                let row = f(h, s);
                if row.len() != core.num_actions() {
                    return Err(Error::Dimension { expected: core.num_actions(), got: row.len() });
                }
                probs.extend(row);
            }
        }
        Self::new(core.num_steps(), core.num_states(), core.num_actions(), probs)
    }

    pub fn uniform(core: &TabularCore) -> Self {
        let p = 1.0 / core.num_actions() as f64;
        Self {
            num_steps: core.num_steps(),
            num_states: core.num_states(),
            num_actions: core.num_actions(),
            probs: vec![p; core.num_steps() * core.num_pairs()],
        }
    }

    /// Point-mass policy; `actions` is indexed `[step][s]`.
    pub fn deterministic(core: &TabularCore, actions: &[usize]) -> Result<Self> {
        let expected = core.num_steps() * core.num_states();
        if actions.len() != expected {
            return Err(Error::Dimension { expected, got: actions.len() });
        }
        let na = core.num_actions();
        let mut probs = vec![0.0; expected * na];
        for (row, &a) in actions.iter().enumerate() {
            if a >= na {
                return Err(Error::OutOfRange { what: "action", index: a, limit: na });
            }
            probs[row * na + a] = 1.0;
        }
        Ok(Self { num_steps: core.num_steps(), num_states: core.num_states(), num_actions: na, probs })
    }

    /// Mixes with the uniform policy: `(1-ε)π + ε·uniform`.
    pub fn mix_uniform(&self, epsilon: f64) -> Self {
        let u = epsilon / self.num_actions as f64;
        let probs = self.probs.iter().map(|&p| (1.0 - epsilon) * p + u).collect();
        Self { probs, ..self.clone() }
    }

    pub fn num_steps(&self) -> usize {
        self.num_steps
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn probs(&self, h: usize, s: usize) -> &[f64] {
        let start = (h * self.num_states + s) * self.num_actions;
        &self.probs[start..start + self.num_actions]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub(crate) fn check_against(&self, core: &TabularCore) -> Result<()> {
        if self.num_steps != core.num_steps()
            || self.num_states != core.num_states()
            || self.num_actions != core.num_actions()
        {
            return Err(Error::InvalidPolicy(format!(
                "policy shape {}x{}x{} does not match instance {}x{}x{}",
                self.num_steps,
                self.num_states,
                self.num_actions,
                core.num_steps(),
                core.num_states(),
                core.num_actions()
            )));
        }
        Ok(())
    }
}
