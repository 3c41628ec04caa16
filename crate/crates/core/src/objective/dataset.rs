use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mdp::{DiscountedSample, Trajectory};

/// One observed transition `(s_h, a_h, s_{h+1})` plus the reward seen with
/// it and the episode that contributed it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tuple {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
    pub episode: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Multiplicity {
    pub count: usize,
    pub reward: f64,
}

/// Per-step transition collections `D_h`, grown one tuple per step per
/// episode.
///
/// Alongside the raw tuples the dataset keeps a count per distinct
/// `(s, a, s')`; every loss in [`crate::objective`] is a sum over tuples, so
/// it is evaluated once per distinct key weighted by its count. Rewards are
/// deterministic functions of `(h, s, a)`, so the key carries them too.
#[derive(Debug, Clone, Default)]
pub struct TransitionDataset {
    tuples: Vec<Vec<Tuple>>,
    counts: Vec<BTreeMap<(usize, usize, usize), Multiplicity>>,
    episodes: usize,
}

impl TransitionDataset {
    pub fn new(num_steps: usize) -> Self {
        Self { tuples: vec![Vec::new(); num_steps], counts: vec![BTreeMap::new(); num_steps], episodes: 0 }
    }

    pub fn num_steps(&self) -> usize {
        self.tuples.len()
    }

    pub fn push(&mut self, h: usize, tuple: Tuple) -> Result<()> {
        if h >= self.num_steps() {
            return Err(Error::OutOfRange { what: "step", index: h, limit: self.num_steps() });
        }
        self.tuples[h].push(tuple);
        let entry = self.counts[h]
            .entry((tuple.state, tuple.action, tuple.next_state))
            .or_insert(Multiplicity { count: 0, reward: tuple.reward });
        debug_assert_eq!(entry.reward, tuple.reward, "rewards must be deterministic per (h, s, a)");
        entry.count += 1;
        Ok(())
    }

    /// Appends the `H` transitions of one episode, one per step.
    pub fn push_trajectory(&mut self, trajectory: &Trajectory, episode: usize) -> Result<()> {
        if trajectory.steps.len() != self.num_steps() {
            return Err(Error::Dimension { expected: self.num_steps(), got: trajectory.steps.len() });
        }
        for (h, t) in trajectory.steps.iter().enumerate() {
            self.push(h, Tuple { state: t.state, action: t.action, reward: t.reward, next_state: t.next_state, episode })?;
        }
        self.episodes = self.episodes.max(episode + 1);
        Ok(())
    }

    /// Appends one discounted-sampler draw to the single stationary step.
    pub fn push_sample(&mut self, sample: &DiscountedSample, episode: usize) -> Result<()> {
        self.push(
            0,
            Tuple {
                state: sample.state,
                action: sample.action,
                reward: sample.reward,
                next_state: sample.next_state,
                episode,
            },
        )?;
        self.episodes = self.episodes.max(episode + 1);
        Ok(())
    }

    pub fn len(&self, h: usize) -> usize {
        self.tuples[h].len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.iter().all(Vec::is_empty)
    }

    pub fn tuples(&self, h: usize) -> &[Tuple] {
        &self.tuples[h]
    }

    /// Number of episodes that have contributed tuples.
    pub fn num_episodes(&self) -> usize {
        self.episodes
    }

    pub(crate) fn multiplicities(&self, h: usize) -> &BTreeMap<(usize, usize, usize), Multiplicity> {
        &self.counts[h]
    }
}
