//! Instance generators for tests and benchmarks.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Mode, TabularCore};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

/// Largest transition table (entries) a generator will allocate.
const MAX_TABLE_ENTRIES: usize = 1 << 28;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstanceKind {
    /// Uniform rewards, normalised-uniform transition rows and initial
    /// distribution. Episodic instances draw a fresh table per step.
    Random {
        num_states: usize,
        num_actions: usize,
        #[serde(flatten)]
        mode: Mode,
    },
    /// Combination lock over `horizon + 1` states: one secret action per
    /// state advances, any other action resets to state 0. Reward 1 only for
    /// the secret action in state `horizon - 1`, which is reachable only at
    /// the last step, so `V*(ρ) = 1` and one mistake forfeits the episode.
    ChainLock { horizon: usize, num_actions: usize },
    /// Two states, two actions, deterministic moves: action 0 stays, action 1
    /// switches. `r(0,·) = (0.1, 0)`, `r(1,·) = (1, 0.5)`, `ρ = (½, ½)`.
    TwoState {
        #[serde(flatten)]
        mode: Mode,
    },
}

fn checked_entries(steps: usize, ns: usize, na: usize) -> Result<usize> {
    steps
        .checked_mul(ns)
        .and_then(|x| x.checked_mul(na))
        .and_then(|x| x.checked_mul(ns))
        .filter(|&n| n <= MAX_TABLE_ENTRIES)
        .ok_or_else(|| Error::SizeOverflow(format!("{steps} steps x {ns} states x {na} actions")))
}

fn normalized_uniform(rng: &mut impl rand::Rng, n: usize) -> Vec<f64> {
    // (0, 1] keeps every entry strictly positive.
    let raw: Vec<f64> = (0..n).map(|_| 1.0 - rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

pub fn make_instance(kind: &InstanceKind, seed: u64) -> Result<TabularCore> {
    let mut rng = stream(seed, Purpose::Instance, 0);
    match *kind {
        InstanceKind::Random { num_states, num_actions, mode } => {
            if num_states == 0 || num_actions == 0 {
                return Err(Error::InvalidInstance("sizes must be at least 1".into()));
            }
            let steps = match mode {
                Mode::Episodic { horizon } => horizon,
                Mode::Discounted { .. } => 1,
            };
            checked_entries(steps, num_states, num_actions)?;
            let pairs = num_states * num_actions;
            let mut reward = Vec::with_capacity(steps * pairs);
            let mut transition = Vec::with_capacity(steps * pairs * num_states);
            for _ in 0..steps {
                reward.extend((0..pairs).map(|_| rng.random::<f64>()));
                for _ in 0..pairs {
                    transition.extend(normalized_uniform(&mut rng, num_states));
                }
            }
            let rho = normalized_uniform(&mut rng, num_states);
            TabularCore::new(num_states, num_actions, mode, reward, transition, rho)
        }
        InstanceKind::ChainLock { horizon, num_actions } => {
            if horizon < 2 {
                return Err(Error::InvalidInstance("chain_lock needs horizon >= 2".into()));
            }
            if num_actions < 2 {
                return Err(Error::InvalidInstance("chain_lock needs at least 2 actions".into()));
            }
            let ns = horizon + 1;
            checked_entries(horizon, ns, num_actions)?;
            let secret: Vec<usize> = (0..ns).map(|_| rng.random_range(0..num_actions)).collect();
            let pairs = ns * num_actions;
            let mut step_reward = vec![0.0; pairs];
            step_reward[(horizon - 1) * num_actions + secret[horizon - 1]] = 1.0;
            let mut step_transition = vec![0.0; pairs * ns];
            for s in 0..ns {
                for a in 0..num_actions {
                    let next = if s == horizon {
                        horizon
                    } else if a == secret[s] {
                        s + 1
                    } else {
                        0
                    };
                    step_transition[(s * num_actions + a) * ns + next] = 1.0;
                }
            }
            let mut rho = vec![0.0; ns];
            rho[0] = 1.0;
            TabularCore::new(
                ns,
                num_actions,
                Mode::Episodic { horizon },
                step_reward.repeat(horizon),
                step_transition.repeat(horizon),
                rho,
            )
        }
        InstanceKind::TwoState { mode } => {
            let steps = match mode {
                Mode::Episodic { horizon } => horizon,
                Mode::Discounted { .. } => 1,
            };
            let reward = [0.1, 0.0, 1.0, 0.5];
            // rows (s, a) -> s': stay, switch, switch, stay
            let transition = [1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0];
            TabularCore::new(2, 2, mode, reward.repeat(steps), transition.repeat(steps), vec![0.5, 0.5])
        }
    }
}
