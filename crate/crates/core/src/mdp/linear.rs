//! Linear-MDP embeddings `r_h = φ_hᵀζ_h`, `P_h(s'|·) = φ_hᵀμ_h(s')`.

use super::TabularCore;
use crate::error::{Error, Result};

/// Tolerance for the reward/transition reconstruction checks.
pub const REALIZATION_TOL: f64 = 1e-10;

/// A tabular core together with a feature map that realises it exactly.
///
/// Features are stored `[step][s][a][dim]`, `ζ` as `[step][dim]` and `μ` as
/// `[step][s'][dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMdp {
    core: TabularCore,
    dim: usize,
    features: Vec<f64>,
    zeta: Vec<f64>,
    mu: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealizationError {
    pub reward: f64,
    pub transition: f64,
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

impl LinearMdp {
    /// One-hot embedding over state-action pairs: `d = |S||A|`,
    /// `ζ_h = r_h` and `μ_h(s') = P_h(s'|·)` read off pair by pair.
    pub fn one_hot(core: TabularCore) -> Self {
        let steps = core.num_steps();
        let (ns, np) = (core.num_states(), core.num_pairs());
        let dim = np;
        let mut features = vec![0.0; steps * np * dim];
        for h in 0..steps {
            for p in 0..np {
                features[(h * np + p) * dim + p] = 1.0;
            }
        }
        let zeta = core.rewards_flat().to_vec();
        let mut mu = vec![0.0; steps * ns * dim];
        for h in 0..steps {
            for p in 0..np {
                let (s, a) = (p / core.num_actions(), p % core.num_actions());
                for (s2, &pt) in core.transition_row(h, s, a).iter().enumerate() {
                    mu[(h * ns + s2) * dim + p] = pt;
                }
            }
        }
        Self { core, dim, features, zeta, mu }
    }

    /// General constructor; rejects embeddings that break the norm bounds
    /// or fail to reproduce `r` and `P` to [`REALIZATION_TOL`].
    pub fn new(core: TabularCore, dim: usize, features: Vec<f64>, zeta: Vec<f64>, mu: Vec<f64>) -> Result<Self> {
        let steps = core.num_steps();
        let (ns, np) = (core.num_states(), core.num_pairs());
        for (name, v, expected) in [
            ("features", &features, steps * np * dim),
            ("zeta", &zeta, steps * dim),
            ("mu", &mu, steps * ns * dim),
        ] {
            if v.len() != expected {
                return Err(Error::InvalidInstance(format!("{name}: expected {expected} entries, got {}", v.len())));
            }
        }
        let lin = Self { core, dim, features, zeta, mu };
        let root_d = (dim as f64).sqrt();
        for h in 0..steps {
            for s in 0..ns {
                for a in 0..lin.core.num_actions() {
                    if norm(lin.feature(h, s, a)) > 1.0 + 1e-12 {
                        return Err(Error::InvalidInstance(format!("‖φ_{h}({s},{a})‖ exceeds 1")));
                    }
                }
            }
            if norm(lin.zeta(h)) > root_d + 1e-12 {
                return Err(Error::InvalidInstance(format!("‖ζ_{h}‖ exceeds √d")));
            }
            let mut total_mu = vec![0.0; dim];
            for s2 in 0..ns {
                for (t, m) in total_mu.iter_mut().zip(lin.mu(h, s2)) {
                    *t += m;
                }
            }
            if norm(&total_mu) > root_d + 1e-12 {
                return Err(Error::InvalidInstance(format!("‖μ_{h}(S)‖ exceeds √d")));
            }
        }
        let err = lin.realization_error();
        if err.reward > REALIZATION_TOL || err.transition > REALIZATION_TOL {
            return Err(Error::InvalidInstance(format!("features do not realise the instance: {err:?}")));
        }
        Ok(lin)
    }

    pub fn core(&self) -> &TabularCore {
        &self.core
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_steps(&self) -> usize {
        self.core.num_steps()
    }

    #[inline]
    pub fn feature(&self, h: usize, s: usize, a: usize) -> &[f64] {
        let start = (h * self.core.num_pairs() + self.core.pair(s, a)) * self.dim;
        &self.features[start..start + self.dim]
    }

    /// All features of step `h`, pair-major (`num_pairs × dim`).
    pub fn step_features(&self, h: usize) -> &[f64] {
        let n = self.core.num_pairs() * self.dim;
        &self.features[h * n..(h + 1) * n]
    }

    pub fn zeta(&self, h: usize) -> &[f64] {
        &self.zeta[h * self.dim..(h + 1) * self.dim]
    }

    pub fn mu(&self, h: usize, next_state: usize) -> &[f64] {
        let start = (h * self.core.num_states() + next_state) * self.dim;
        &self.mu[start..start + self.dim]
    }

    /// Largest absolute reconstruction error of `φᵀζ` against `r` and of
    /// `φᵀμ` against `P`.
    pub fn realization_error(&self) -> RealizationError {
        let core = &self.core;
        let mut out = RealizationError { reward: 0.0, transition: 0.0 };
        for h in 0..core.num_steps() {
            for s in 0..core.num_states() {
                for a in 0..core.num_actions() {
                    let phi = self.feature(h, s, a);
                    out.reward = out.reward.max((dot(phi, self.zeta(h)) - core.reward(h, s, a)).abs());
                    for (s2, &pt) in core.transition_row(h, s, a).iter().enumerate() {
                        out.transition = out.transition.max((dot(phi, self.mu(h, s2)) - pt).abs());
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{make_instance, InstanceKind, Mode};

    #[test]
    fn one_hot_two_state_is_standard_basis() {
        let core = make_instance(&InstanceKind::TwoState { mode: Mode::Episodic { horizon: 2 } }, 0).unwrap();
        let lin = LinearMdp::one_hot(core);
        assert_eq!(lin.dim(), 4);
        for h in 0..2 {
            for s in 0..2 {
                for a in 0..2 {
                    let mut e = vec![0.0; 4];
                    e[s * 2 + a] = 1.0;
                    assert_eq!(lin.feature(h, s, a), &e[..]);
                }
            }
        }
    }

    #[test]
    fn one_hot_reconstruction_is_exact() {
        for seed in 0..4 {
            for mode in [Mode::Episodic { horizon: 3 }, Mode::Discounted { gamma: 0.9 }] {
                let core = make_instance(&InstanceKind::Random { num_states: 4, num_actions: 3, mode }, seed).unwrap();
                let lin = LinearMdp::one_hot(core.clone());
                let err = lin.realization_error();
                assert!(err.reward <= 1e-15 && err.transition <= 1e-15, "{err:?}");
                // validated constructor accepts the same data
                LinearMdp::new(core, lin.dim, lin.features.clone(), lin.zeta.clone(), lin.mu.clone()).unwrap();
            }
        }
    }

    #[test]
    fn chain_lock_dimension() {
        let core = make_instance(&InstanceKind::ChainLock { horizon: 6, num_actions: 2 }, 0).unwrap();
        assert_eq!(LinearMdp::one_hot(core).dim(), 14);
    }

    #[test]
    fn non_realizing_features_are_rejected() {
        let core = make_instance(&InstanceKind::TwoState { mode: Mode::Discounted { gamma: 0.5 } }, 0).unwrap();
        let lin = LinearMdp::one_hot(core.clone());
        let mut zeta = lin.zeta.clone();
        zeta[0] += 0.25;
        assert!(LinearMdp::new(core, 4, lin.features.clone(), zeta, lin.mu.clone()).is_err());
    }
}
