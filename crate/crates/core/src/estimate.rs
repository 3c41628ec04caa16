//! Monte-Carlo estimators used as independent checks on the exact oracles.
//!
//! Work is split into fixed-size blocks, block `k` drawing from
//! `stream(seed, MonteCarlo, k)`. Block results are merged in block order,
//! so estimates are identical under [`Exec::Sequential`] and
//! [`Exec::Parallel`].

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::mdp::{rollout, sample_discounted, TabularCore, TabularPolicy};
use crate::rng::{stream, Purpose};

/// Episodes (or sampler draws) per block.
pub const BLOCK: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
    pub count: usize,
}

fn blocks(n: usize) -> Vec<(usize, usize)> {
    (0..n.div_ceil(BLOCK)).map(|k| (k, BLOCK.min(n - k * BLOCK))).collect()
}

/// `V^π(ρ)` from `episodes` independent returns.
///
/// Episodic returns are undiscounted sums over the horizon. Discounted
/// returns use the sampler: `r(s, a)/(1 − γ)` with `(s, a) ~ d^π_ρ` is an
/// unbiased estimate of `V^π(ρ)`.
pub fn policy_value(core: &TabularCore, policy: &TabularPolicy, episodes: usize, seed: u64, exec: Exec) -> Result<Estimate> {
    if episodes == 0 {
        return Err(Error::InvalidArgument("episodes must be >= 1".into()));
    }
    policy.check_against(core)?;
    let parts = exec.map(blocks(episodes), |(k, n)| -> Result<(f64, f64)> {
        let mut rng = stream(seed, Purpose::MonteCarlo, k as u64);
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..n {
            let g = match core.gamma() {
                Some(gamma) => sample_discounted(core, policy, &mut rng)?.reward / (1.0 - gamma),
                None => rollout(core, policy, &mut rng)?.steps.iter().map(|t| t.reward).sum(),
            };
            sum += g;
            sq += g * g;
        }
        Ok((sum, sq))
    });
    let (mut sum, mut sq) = (0.0, 0.0);
    for part in parts {
        let (a, b) = part?;
        sum += a;
        sq += b;
    }
    let n = episodes as f64;
    let mean = sum / n;
    let var = if episodes > 1 { ((sq - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
    Ok(Estimate { mean, std_err: (var / n).sqrt(), count: episodes })
}

/// Empirical state-action frequencies per step from episodic rollouts,
/// flat `[step][s][a]`.
pub fn rollout_visitation(
    core: &TabularCore,
    policy: &TabularPolicy,
    episodes: usize,
    seed: u64,
    exec: Exec,
) -> Result<Vec<f64>> {
    if core.is_discounted() {
        return Err(Error::WrongMode { expected: "episodic" });
    }
    policy.check_against(core)?;
    let np = core.num_pairs();
    let parts = exec.map(blocks(episodes), |(k, n)| -> Result<Vec<u64>> {
        let mut rng = stream(seed, Purpose::MonteCarlo, k as u64);
        let mut counts = vec![0u64; core.num_steps() * np];
        for _ in 0..n {
            for (h, t) in rollout(core, policy, &mut rng)?.steps.iter().enumerate() {
                counts[h * np + core.pair(t.state, t.action)] += 1;
            }
        }
        Ok(counts)
    });
    merge_frequencies(parts, core.num_steps() * np, episodes)
}

fn merge_frequencies(parts: Vec<Result<Vec<u64>>>, len: usize, n: usize) -> Result<Vec<f64>> {
    let mut total = vec![0u64; len];
    for part in parts {
        for (t, c) in total.iter_mut().zip(part?) {
            *t += c;
        }
    }
    Ok(total.into_iter().map(|c| c as f64 / n as f64).collect())
}

/// Empirical law of the discounted sampler's output.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerStats {
    /// Frequency of each emitted `(s, a)`, flat `[s][a]`.
    pub pair_freq: Vec<f64>,
    /// `length_counts[k]` = number of draws whose loop ran `k + 1` steps.
    pub length_counts: Vec<u64>,
    pub mean_draws: f64,
    pub count: usize,
}

pub fn sampler_stats(core: &TabularCore, policy: &TabularPolicy, draws: usize, seed: u64, exec: Exec) -> Result<SamplerStats> {
    if draws == 0 {
        return Err(Error::InvalidArgument("draws must be >= 1".into()));
    }
    let np = core.num_pairs();
    let parts = exec.map(blocks(draws), |(k, n)| -> Result<(Vec<u64>, Vec<u64>)> {
        let mut rng = stream(seed, Purpose::MonteCarlo, k as u64);
        let mut pairs = vec![0u64; np];
        let mut lengths = Vec::new();
        for _ in 0..n {
            let x = sample_discounted(core, policy, &mut rng)?;
            pairs[core.pair(x.state, x.action)] += 1;
            let idx = (x.draws - 1) as usize;
            if lengths.len() <= idx {
                lengths.resize(idx + 1, 0);
            }
            lengths[idx] += 1;
        }
        Ok((pairs, lengths))
    });
    let mut pair_counts = vec![0u64; np];
    let mut length_counts: Vec<u64> = Vec::new();
    for part in parts {
        let (p, l) = part?;
        pair_counts.iter_mut().zip(p).for_each(|(t, c)| *t += c);
        if length_counts.len() < l.len() {
            length_counts.resize(l.len(), 0);
        }
        length_counts.iter_mut().zip(l).for_each(|(t, c)| *t += c);
    }
    let total_draws: u64 = length_counts.iter().enumerate().map(|(k, &c)| (k as u64 + 1) * c).sum();
    Ok(SamplerStats {
        pair_freq: pair_counts.into_iter().map(|c| c as f64 / draws as f64).collect(),
        length_counts,
        mean_draws: total_draws as f64 / draws as f64,
        count: draws,
    })
}

/// `½ Σ |p − q|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}
