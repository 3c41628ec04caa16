//! Exact dynamic programming on tabular instances.

use nalgebra::{DMatrix, DVector};

use super::{Mode, TabularCore, TabularPolicy};
use crate::error::{Error, Result};

/// Above this many state-action pairs, discounted policy evaluation falls
/// back from a dense linear solve to successive approximation.
const DIRECT_SOLVE_MAX_PAIRS: usize = 10_000;
const DISCOUNTED_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 1_000_000;

/// Q- and V-tables for every step, `q` indexed `[step][s][a]`, `v` indexed
/// `[step][s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Values {
    num_steps: usize,
    num_states: usize,
    num_actions: usize,
    q: Vec<f64>,
    v: Vec<f64>,
}

impl Values {
    fn zeros(core: &TabularCore) -> Self {
        Self {
            num_steps: core.num_steps(),
            num_states: core.num_states(),
            num_actions: core.num_actions(),
            q: vec![0.0; core.num_steps() * core.num_pairs()],
            v: vec![0.0; core.num_steps() * core.num_states()],
        }
    }

    pub fn num_steps(&self) -> usize {
        self.num_steps
    }

    /// `Q_h(s, a)`; zero at the episodic boundary `h == num_steps`.
    pub fn q(&self, h: usize, s: usize, a: usize) -> f64 {
        if h == self.num_steps {
            return 0.0;
        }
        self.q[(h * self.num_states + s) * self.num_actions + a]
    }

    pub fn q_row(&self, h: usize, s: usize) -> &[f64] {
        let start = (h * self.num_states + s) * self.num_actions;
        &self.q[start..start + self.num_actions]
    }

    pub fn v(&self, h: usize, s: usize) -> f64 {
        if h == self.num_steps {
            return 0.0;
        }
        self.v[h * self.num_states + s]
    }

    pub fn v_step(&self, h: usize) -> &[f64] {
        &self.v[h * self.num_states..(h + 1) * self.num_states]
    }

    /// `V_0(ρ) = Σ_s ρ(s) V_0(s)`.
    pub fn v_rho(&self, rho: &[f64]) -> f64 {
        rho.iter().zip(self.v_step(0)).map(|(p, v)| p * v).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalValues {
    pub values: Values,
    /// Greedy action per `[step][s]`, ties broken toward the lowest index.
    pub greedy: Vec<usize>,
}

impl OptimalValues {
    pub fn greedy_policy(&self, core: &TabularCore) -> TabularPolicy {
        TabularPolicy::deterministic(core, &self.greedy).expect("greedy actions are in range")
    }
}

/// First index of the maximum; NaN-free input assumed.
pub fn argmax_lowest(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate().skip(1) {
        if x > row[best] {
            best = i;
        }
    }
    best
}

fn expect_next(row: &[f64], v_next: &[f64]) -> f64 {
    row.iter().zip(v_next).map(|(p, v)| p * v).sum()
}

/// Exact `Q^π` and `V^π`.
///
/// Episodic instances use backward recursion from `Q_H = 0`. Discounted
/// instances solve `(I - γ P^π) V = r^π` directly, or iterate to a `1e-12`
/// sup-norm bound on very large instances.
pub fn policy_values(core: &TabularCore, policy: &TabularPolicy) -> Result<Values> {
    policy.check_against(core)?;
    let (ns, na) = (core.num_states(), core.num_actions());
    let mut out = Values::zeros(core);
    match core.mode() {
        Mode::Episodic { horizon } => {
            let mut v_next = vec![0.0; ns];
            for h in (0..horizon).rev() {
                for s in 0..ns {
                    let mut vs = 0.0;
                    for a in 0..na {
                        let q = core.reward(h, s, a) + expect_next(core.transition_row(h, s, a), &v_next);
                        out.q[(h * ns + s) * na + a] = q;
                        vs += policy.probs(h, s)[a] * q;
                    }
                    out.v[h * ns + s] = vs;
                }
                v_next.copy_from_slice(out.v_step(h));
            }
        }
        Mode::Discounted { gamma } => {
            let v = if core.num_pairs() <= DIRECT_SOLVE_MAX_PAIRS {
                discounted_policy_solve(core, policy, gamma)?
            } else {
                discounted_policy_iterate(core, policy, gamma)
            };
            for s in 0..ns {
                for a in 0..na {
                    out.q[s * na + a] = core.reward(0, s, a) + gamma * expect_next(core.transition_row(0, s, a), &v);
                }
                out.v[s] = v[s];
            }
        }
    }
    Ok(out)
}

/// State-to-state kernel and expected reward under `π` (stationary case).
fn induced_chain(core: &TabularCore, policy: &TabularPolicy) -> (DMatrix<f64>, DVector<f64>) {
    let ns = core.num_states();
    let mut p = DMatrix::zeros(ns, ns);
    let mut r = DVector::zeros(ns);
    for s in 0..ns {
        for (a, &pa) in policy.probs(0, s).iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            r[s] += pa * core.reward(0, s, a);
            for (s2, &pt) in core.transition_row(0, s, a).iter().enumerate() {
                p[(s, s2)] += pa * pt;
            }
        }
    }
    (p, r)
}

fn discounted_policy_solve(core: &TabularCore, policy: &TabularPolicy, gamma: f64) -> Result<Vec<f64>> {
    let ns = core.num_states();
    let (p, r) = induced_chain(core, policy);
    let system = DMatrix::identity(ns, ns) - p * gamma;
    let v = system
        .lu()
        .solve(&r)
        .ok_or_else(|| Error::Singular("(I - γP^π) is singular".into()))?;
    Ok(v.iter().copied().collect())
}

fn discounted_policy_iterate(core: &TabularCore, policy: &TabularPolicy, gamma: f64) -> Vec<f64> {
    let ns = core.num_states();
    let mut v = vec![0.0; ns];
    for _ in 0..MAX_SWEEPS {
        let mut next = vec![0.0; ns];
        for (s, slot) in next.iter_mut().enumerate() {
            *slot = policy
                .probs(0, s)
                .iter()
                .enumerate()
                .map(|(a, pa)| pa * (core.reward(0, s, a) + gamma * expect_next(core.transition_row(0, s, a), &v)))
                .sum();
        }
        let change = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if change * gamma / (1.0 - gamma) <= DISCOUNTED_TOL {
            break;
        }
    }
    v
}

/// Exact `Q*`, `V*` and the lowest-index greedy policy.
///
/// Discounted instances run value iteration until the contraction bound
/// `γ/(1-γ)·‖V_{k+1} - V_k‖∞` drops below `1e-12`.
pub fn optimal_values(core: &TabularCore) -> OptimalValues {
    let (ns, na) = (core.num_states(), core.num_actions());
    let mut out = Values::zeros(core);
    let mut greedy = vec![0; core.num_steps() * ns];
    match core.mode() {
        Mode::Episodic { horizon } => {
            let mut v_next = vec![0.0; ns];
            for h in (0..horizon).rev() {
                for s in 0..ns {
                    for a in 0..na {
                        out.q[(h * ns + s) * na + a] =
                            core.reward(h, s, a) + expect_next(core.transition_row(h, s, a), &v_next);
                    }
                    let best = argmax_lowest(out.q_row(h, s));
                    greedy[h * ns + s] = best;
                    out.v[h * ns + s] = out.q_row(h, s)[best];
                }
                v_next.copy_from_slice(out.v_step(h));
            }
        }
        Mode::Discounted { gamma } => {
            let mut v = vec![0.0; ns];
            let mut q = vec![0.0; ns * na];
            for _ in 0..MAX_SWEEPS {
                for s in 0..ns {
                    for a in 0..na {
                        q[s * na + a] = core.reward(0, s, a) + gamma * expect_next(core.transition_row(0, s, a), &v);
                    }
                }
                let next: Vec<f64> = q.chunks(na).map(|row| row[argmax_lowest(row)]).collect();
                let change = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                v = next;
                if change * gamma / (1.0 - gamma) <= DISCOUNTED_TOL {
                    break;
                }
            }
            for s in 0..ns {
                for a in 0..na {
                    out.q[s * na + a] = core.reward(0, s, a) + gamma * expect_next(core.transition_row(0, s, a), &v);
                }
                let best = argmax_lowest(out.q_row(0, s));
                greedy[s] = best;
                out.v[s] = out.q_row(0, s)[best];
            }
        }
    }
    OptimalValues { values: out, greedy }
}

/// State-action visitation probabilities, indexed `[step][s][a]`.
///
/// Episodic: `d_h(s,a) = P(s_h = s, a_h = a)`. Discounted: the normalised
/// occupancy `(1-γ) Σ_k γ^k P(s_k = s, a_k = a)` stored as step 0.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitationTable {
    num_steps: usize,
    num_pairs: usize,
    num_actions: usize,
    d: Vec<f64>,
}

impl VisitationTable {
    pub fn get(&self, h: usize, s: usize, a: usize) -> f64 {
        self.d[h * self.num_pairs + s * self.num_actions + a]
    }

    /// Pair-indexed table of step `h`.
    pub fn step(&self, h: usize) -> &[f64] {
        &self.d[h * self.num_pairs..(h + 1) * self.num_pairs]
    }

    pub fn num_steps(&self) -> usize {
        self.num_steps
    }

    /// State marginal of step `h`.
    pub fn state_marginal(&self, h: usize) -> Vec<f64> {
        self.step(h).chunks(self.num_actions).map(|row| row.iter().sum()).collect()
    }
}

pub fn visitation(core: &TabularCore, policy: &TabularPolicy) -> Result<VisitationTable> {
    policy.check_against(core)?;
    let (ns, na) = (core.num_states(), core.num_actions());
    let np = core.num_pairs();
    let mut d = vec![0.0; core.num_steps() * np];
    match core.mode() {
        Mode::Episodic { horizon } => {
            let mut state_dist = core.rho().to_vec();
            for h in 0..horizon {
                for s in 0..ns {
                    for (a, &pa) in policy.probs(h, s).iter().enumerate() {
                        d[h * np + s * na + a] = state_dist[s] * pa;
                    }
                }
                if h + 1 < horizon {
                    let mut next = vec![0.0; ns];
                    for s in 0..ns {
                        for a in 0..na {
                            let w = d[h * np + s * na + a];
                            if w == 0.0 {
                                continue;
                            }
                            for (s2, &pt) in core.transition_row(h, s, a).iter().enumerate() {
                                next[s2] += w * pt;
                            }
                        }
                    }
                    state_dist = next;
                }
            }
        }
        Mode::Discounted { gamma } => {
            // ν = (1-γ)ρ + γ P_πᵀ ν over states, then d(s,a) = ν(s)π(a|s).
            let (p, _) = induced_chain(core, policy);
            let system = DMatrix::identity(ns, ns) - p.transpose() * gamma;
            let rhs = DVector::from_iterator(ns, core.rho().iter().map(|r| (1.0 - gamma) * r));
            let nu = system
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::Singular("(I - γP_πᵀ) is singular".into()))?;
            for s in 0..ns {
                for (a, &pa) in policy.probs(0, s).iter().enumerate() {
                    d[s * na + a] = nu[s] * pa;
                }
            }
        }
    }
    Ok(VisitationTable { num_steps: core.num_steps(), num_pairs: np, num_actions: na, d })
}
