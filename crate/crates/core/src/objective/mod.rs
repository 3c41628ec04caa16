//! The VAC objective `scale·V^π_f(ρ) − α·L(f, π)` over a transition dataset.
//!
//! For each step `h` and tuple `ξ = (s, a, s')` let
//! `y(a') = r_h(s,a) + κ·f_{h+1}(s', a')` with `a' ~ π_{h+1}(·|s')`, where
//! `κ = 1` (episodic, `f_H = 0`) or `κ = γ` (discounted, where `h+1` is the
//! same stationary step). The loss is
//!
//! ```text
//! L(f, π) = Σ_h [ Σ_ξ E_{a'}(y − f_h(s,a))² − inf_g Σ_ξ E_{a'}(y − g(s,a))² ]
//! ```
//!
//! Because `g` does not depend on `a'`, `E(y − g)² = (ȳ − g)² + Var(y)`, so
//! the inner infimum is a weighted ridge regression of the averaged target
//! `ȳ` on the features, and the per-tuple difference collapses to
//! `(g − f)(2ȳ − f − g)`. The regression is solved in the span of the
//! visited pairs' features (kernel form): with `K` the Gram matrix of the
//! distinct visited features, `N` their counts and `m` their mean targets,
//! `g = Φᵀβ` where `(K + ridge·N⁻¹)β = m`. If `g` leaves the Q-class ball it
//! is rescaled radially onto it.
//!
//! Gradients hold the fitted `g` fixed (envelope theorem); the expectation
//! over `a'` is an exact sum, and its policy derivative uses the softmax
//! score `π(a')(x(a') − E_π x)`.
//!
//! The MEX loss is the same expression with `π_{h+1}` replaced by the
//! lowest-index greedy policy of `f_{h+1}`.

mod dataset;

pub use dataset::{Tuple, TransitionDataset};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::approx::{dot, LogLinearPolicy, QFunction, QTable, StepWeights};
use crate::error::{Error, Result};
use crate::mdp::{argmax_lowest, LinearMdp, TabularPolicy};

/// Ridge added to the inner least-squares normal equations.
pub const DEFAULT_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, Copy)]
struct Edge {
    slot: usize,
    next_state: usize,
    count: f64,
}

/// Cached regression data for one step of the dataset.
#[derive(Debug, Clone)]
struct StepFit {
    pairs: Vec<usize>,
    counts: Vec<f64>,
    rewards: Vec<f64>,
    edges: Vec<Edge>,
    solve: DMatrix<f64>,
    gram: DMatrix<f64>,
    /// `φ(p)ᵀφ(visited_j)` for every pair `p` of the instance.
    kernel_all: DMatrix<f64>,
}

impl StepFit {
    fn build(lin: &LinearMdp, data: &TransitionDataset, h: usize, ridge: f64) -> Option<Self> {
        let core = lin.core();
        let mult = data.multiplicities(h);
        if mult.is_empty() {
            return None;
        }
        let mut pairs: Vec<usize> = Vec::new();
        let mut counts = Vec::new();
        let mut rewards = Vec::new();
        let mut edges = Vec::with_capacity(mult.len());
        // keys are sorted by (s, a, s'), so tuples of one pair are contiguous
        for (&(s, a, s2), m) in mult {
            let pair = core.pair(s, a);
            if pairs.last() != Some(&pair) {
                pairs.push(pair);
                counts.push(0.0);
                rewards.push(m.reward);
            }
            let slot = pairs.len() - 1;
            counts[slot] += m.count as f64;
            edges.push(Edge { slot, next_state: s2, count: m.count as f64 });
        }
        let k = pairs.len();
        let feats = lin.step_features(h);
        let dim = lin.dim();
        let phi = |p: usize| &feats[p * dim..(p + 1) * dim];
        let gram = DMatrix::from_fn(k, k, |i, j| dot(phi(pairs[i]), phi(pairs[j])));
        let kernel_all = DMatrix::from_fn(core.num_pairs(), k, |p, j| dot(phi(p), phi(pairs[j])));
        let mut system = gram.clone();
        for i in 0..k {
            system[(i, i)] += ridge / counts[i];
        }
        let solve = match system.clone().cholesky() {
            Some(chol) => chol.inverse(),
            None => system.pseudo_inverse(1e-12).expect("SVD of a symmetric matrix converges"),
        };
        Some(Self { pairs, counts, rewards, edges, solve, gram, kernel_all })
    }
}

/// Diagnostic bundle for one evaluation of the objective.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectiveReport {
    /// `scale·V^π_f(ρ) − α·loss_value`.
    pub value: f64,
    pub loss_value: f64,
    /// `scale·V^π_f(ρ)` (`scale = 1` episodic, `1−γ` discounted).
    pub value_term: f64,
    /// Fitted inner `g_h` per step; zero vectors at empty steps.
    pub fitted_g: StepWeights,
    pub grad_theta: StepWeights,
    pub grad_omega: StepWeights,
}

/// Inner least-squares solution at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerFit {
    pub g: Vec<f64>,
    /// `Σ_ξ E_{a'}(y − g(s,a))²` at the returned `g`.
    pub min_value: f64,
    /// Whether the unconstrained solution had to be rescaled into the ball.
    pub projected: bool,
}

/// Raw evaluation output shared by every public entry point.
#[derive(Debug, Clone)]
pub(crate) struct Evaluation {
    pub value_term: f64,
    pub loss: f64,
    pub objective: f64,
    pub min_values: Vec<f64>,
    betas: Vec<Option<(DVector<f64>, bool)>>,
    /// d objective / d f_h(s,a), `[step][pair]`.
    pub coeff_q: Vec<f64>,
    /// d objective / d logit_h(s,a), `[step][pair]`.
    pub coeff_logit: Vec<f64>,
    /// `coeff_logit` without its `π_h(a|s)` factor: the natural-gradient
    /// (advantage) coefficient of the softmax in each state.
    pub coeff_adv: Vec<f64>,
}

/// Dataset-specific state for evaluating the VAC (and MEX) objective.
///
/// Construction aggregates the dataset and factors each step's regression
/// system once; evaluations afterwards cost `O(pairs·d)` per step.
#[derive(Debug, Clone)]
pub struct Problem<'a> {
    lin: &'a LinearMdp,
    alpha: f64,
    ridge: f64,
    q_norm: Vec<f64>,
    q_sup: Vec<f64>,
    steps: Vec<Option<StepFit>>,
}

impl<'a> Problem<'a> {
    pub fn new(lin: &'a LinearMdp, data: &TransitionDataset, alpha: f64) -> Result<Self> {
        Self::with_ridge(lin, data, alpha, DEFAULT_RIDGE)
    }

    pub fn with_ridge(lin: &'a LinearMdp, data: &TransitionDataset, alpha: f64, ridge: f64) -> Result<Self> {
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidArgument(format!("alpha must be finite and >= 0, got {alpha}")));
        }
        if !(ridge >= 0.0) {
            return Err(Error::InvalidArgument(format!("ridge must be >= 0, got {ridge}")));
        }
        if data.num_steps() != lin.num_steps() {
            return Err(Error::Dimension { expected: lin.num_steps(), got: data.num_steps() });
        }
        let core = lin.core();
        for h in 0..data.num_steps() {
            for &(s, a, s2) in data.multiplicities(h).keys() {
                core.check_state_action(s, a)?;
                core.check_state_action(s2, 0)?;
            }
        }
        let root_d = (lin.dim() as f64).sqrt();
        let q_sup: Vec<f64> = (0..lin.num_steps()).map(|h| core.value_bound(h)).collect();
        let q_norm = q_sup.iter().map(|s| s * root_d).collect();
        let steps = (0..lin.num_steps()).map(|h| StepFit::build(lin, data, h, ridge)).collect();
        Ok(Self { lin, alpha, ridge, q_norm, q_sup, steps })
    }

    pub fn lin(&self) -> &LinearMdp {
        self.lin
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    /// `1` for episodic instances, `1 − γ` for discounted ones.
    pub fn value_scale(&self) -> f64 {
        self.lin.core().gamma().map_or(1.0, |g| 1.0 - g)
    }

    pub(crate) fn evaluate(&self, q: &QTable, policy: &TabularPolicy, with_grad: bool) -> Evaluation {
        let core = self.lin.core();
        let (ns, na, np) = (core.num_states(), core.num_actions(), core.num_pairs());
        let steps = core.num_steps();
        let kappa = core.target_discount();
        let scale = self.value_scale();

        // E_π f_h(s,·) and Var_π f_h(s,·) per step and state
        let mut vbar = vec![0.0; steps * ns];
        let mut var = vec![0.0; steps * ns];
        for h in 0..steps {
            let qh = q.step(h);
            for s in 0..ns {
                let pr = policy.probs(h, s);
                let row = &qh[s * na..(s + 1) * na];
                let mean: f64 = pr.iter().zip(row).map(|(p, x)| p * x).sum();
                vbar[h * ns + s] = mean;
                var[h * ns + s] = pr.iter().zip(row).map(|(p, x)| p * (x - mean) * (x - mean)).sum();
            }
        }

        let mut coeff_q = if with_grad { vec![0.0; steps * np] } else { Vec::new() };
        let mut coeff_logit = if with_grad { vec![0.0; steps * np] } else { Vec::new() };
        let mut coeff_adv = if with_grad { vec![0.0; steps * np] } else { Vec::new() };

        let rho = core.rho();
        let mut value = 0.0;
        for s in 0..ns {
            value += rho[s] * vbar[s];
        }
        let value_term = scale * value;
        if with_grad {
            for s in 0..ns {
                if rho[s] == 0.0 {
                    continue;
                }
                let pr = policy.probs(0, s);
                for a in 0..na {
                    let w = scale * rho[s] * pr[a];
                    let adv = q.step(0)[s * na + a] - vbar[s];
                    coeff_q[s * na + a] += w;
                    coeff_logit[s * na + a] += w * adv;
                    coeff_adv[s * na + a] += scale * rho[s] * adv;
                }
            }
        }

        let mut loss = 0.0;
        let mut min_values = vec![0.0; steps];
        let mut betas = Vec::with_capacity(steps);
        let mut next_weight = vec![0.0; ns];
        for h in 0..steps {
            let Some(fit) = &self.steps[h] else {
                betas.push(None);
                continue;
            };
            let next = core.next_step(h);
            let qh = q.step(h);
            let ybar = |e: &Edge| {
                let r = fit.rewards[e.slot];
                match next {
                    Some(n) => r + kappa * vbar[n * ns + e.next_state],
                    None => r,
                }
            };
            let y_var = |e: &Edge| match next {
                Some(n) => kappa * kappa * var[n * ns + e.next_state],
                None => 0.0,
            };

            let k = fit.pairs.len();
            let mut means = DVector::zeros(k);
            for e in &fit.edges {
                means[e.slot] += e.count * ybar(e);
            }
            for j in 0..k {
                means[j] /= fit.counts[j];
            }
            let mut beta = &fit.solve * &means;
            let fitted_all = &fit.kernel_all * &beta;
            let sup = fitted_all.amax();
            let g_norm = beta.dot(&(&fit.gram * &beta)).max(0.0).sqrt();
            let shrink = (self.q_norm[h] / g_norm).min(self.q_sup[h] / sup).min(1.0);
            let projected = shrink < 1.0;
            if projected {
                beta *= shrink;
            }
            let g_at = |slot: usize| fitted_all[fit.pairs[slot]] * if projected { shrink } else { 1.0 };

            let mut step_loss = 0.0;
            let mut min_value = 0.0;
            next_weight.iter_mut().for_each(|w| *w = 0.0);
            for e in &fit.edges {
                let y = ybar(e);
                let f = qh[fit.pairs[e.slot]];
                let g = g_at(e.slot);
                step_loss += e.count * (g - f) * (2.0 * y - f - g);
                min_value += e.count * ((y - g) * (y - g) + y_var(e));
                if with_grad {
                    coeff_q[h * np + fit.pairs[e.slot]] += 2.0 * self.alpha * e.count * (y - f);
                    next_weight[e.next_state] += -2.0 * self.alpha * e.count * (g - f);
                }
            }
            if with_grad {
                if let Some(n) = next {
                    let qn = q.step(n);
                    for (s2, &w) in next_weight.iter().enumerate() {
                        if w == 0.0 {
                            continue;
                        }
                        let pr = policy.probs(n, s2);
                        for a in 0..na {
                            let idx = n * np + s2 * na + a;
                            let c = w * kappa * pr[a];
                            let adv = qn[s2 * na + a] - vbar[n * ns + s2];
                            coeff_q[idx] += c;
                            coeff_logit[idx] += c * adv;
                            coeff_adv[idx] += w * kappa * adv;
                        }
                    }
                }
            }
            loss += step_loss;
            min_values[h] = min_value;
            betas.push(Some((beta, projected)));
        }

        Evaluation {
            value_term,
            loss,
            objective: value_term - self.alpha * loss,
            min_values,
            betas,
            coeff_q,
            coeff_logit,
            coeff_adv,
        }
    }

    /// Maps `[step][pair]` coefficients onto feature space.
    pub(crate) fn pull_back(&self, coeff: &[f64]) -> StepWeights {
        let np = self.lin.core().num_pairs();
        let dim = self.lin.dim();
        let mut out = StepWeights::zeros(self.lin.num_steps(), dim);
        for h in 0..self.lin.num_steps() {
            let feats = self.lin.step_features(h);
            let target = out.step_mut(h);
            for (p, &c) in coeff[h * np..(h + 1) * np].iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                for (t, x) in target.iter_mut().zip(&feats[p * dim..(p + 1) * dim]) {
                    *t += c * x;
                }
            }
        }
        out
    }

    fn fitted_weights(&self, eval: &Evaluation) -> StepWeights {
        let dim = self.lin.dim();
        let mut out = StepWeights::zeros(self.lin.num_steps(), dim);
        for (h, entry) in eval.betas.iter().enumerate() {
            let (Some(fit), Some((beta, _))) = (&self.steps[h], entry) else { continue };
            let feats = self.lin.step_features(h);
            let target = out.step_mut(h);
            for (j, &p) in fit.pairs.iter().enumerate() {
                for (t, x) in target.iter_mut().zip(&feats[p * dim..(p + 1) * dim]) {
                    *t += beta[j] * x;
                }
            }
        }
        out
    }

    fn check_policy(&self, policy: &TabularPolicy) -> Result<()> {
        policy.check_against(self.lin.core())
    }

    fn check_q(&self, f: &QFunction) -> Result<()> {
        if f.theta.num_steps() != self.lin.num_steps() || f.theta.dim() != self.lin.dim() {
            return Err(Error::Dimension { expected: self.lin.dim(), got: f.theta.dim() });
        }
        Ok(())
    }

    /// Inner least-squares fit at step `h`.
    pub fn fit_inner_g(&self, f: &QFunction, policy: &TabularPolicy, h: usize) -> Result<InnerFit> {
        self.check_q(f)?;
        self.check_policy(policy)?;
        self.lin.core().check_step(h)?;
        if self.steps[h].is_none() {
            return Err(Error::EmptyDataset(h));
        }
        let eval = self.evaluate(&f.table(self.lin), policy, false);
        let g = self.fitted_weights(&eval).step(h).to_vec();
        let projected = eval.betas[h].as_ref().is_some_and(|(_, p)| *p);
        Ok(InnerFit { g, min_value: eval.min_values[h], projected })
    }

    /// `L(f, π)` for an explicit policy table.
    pub fn loss(&self, f: &QFunction, policy: &TabularPolicy) -> Result<f64> {
        self.check_q(f)?;
        self.check_policy(policy)?;
        Ok(self.evaluate(&f.table(self.lin), policy, false).loss)
    }

    /// MEX loss: targets use `max_a f_{h+1}(s', a)`.
    pub fn mex_loss(&self, f: &QFunction) -> Result<f64> {
        self.check_q(f)?;
        let table = f.table(self.lin);
        Ok(self.evaluate(&table, &greedy_table(self.lin, &table), false).loss)
    }

    /// MEX objective `scale·E_ρ max_a f_0(s, a) − α·L_mex(f)`.
    pub fn mex_objective(&self, f: &QFunction) -> Result<f64> {
        self.check_q(f)?;
        let table = f.table(self.lin);
        Ok(self.evaluate(&table, &greedy_table(self.lin, &table), false).objective)
    }

    /// Objective value, loss, fitted `g` and gradients in `θ` and `ω`.
    pub fn objective(&self, f: &QFunction, policy: &LogLinearPolicy) -> Result<ObjectiveReport> {
        self.check_q(f)?;
        if policy.omega.num_steps() != self.lin.num_steps() || policy.omega.dim() != self.lin.dim() {
            return Err(Error::Dimension { expected: self.lin.dim(), got: policy.omega.dim() });
        }
        let eval = self.evaluate(&f.table(self.lin), &policy.to_tabular(self.lin), true);
        Ok(ObjectiveReport {
            value: eval.objective,
            loss_value: eval.loss,
            value_term: eval.value_term,
            fitted_g: self.fitted_weights(&eval),
            grad_theta: self.pull_back(&eval.coeff_q),
            grad_omega: self.pull_back(&eval.coeff_logit),
        })
    }
}

/// Lowest-index greedy point-mass policy of a Q table.
pub fn greedy_table(lin: &LinearMdp, q: &QTable) -> TabularPolicy {
    let core = lin.core();
    let na = core.num_actions();
    let mut actions = Vec::with_capacity(core.num_steps() * core.num_states());
    for h in 0..core.num_steps() {
        actions.extend(q.step(h).chunks(na).map(argmax_lowest));
    }
    TabularPolicy::deterministic(core, &actions).expect("greedy actions are in range")
}

/// `L(f, π)` with the default ridge.
pub fn vac_loss(f: &QFunction, policy: &TabularPolicy, data: &TransitionDataset, lin: &LinearMdp) -> Result<f64> {
    Problem::new(lin, data, 0.0)?.loss(f, policy)
}

/// MEX loss with the default ridge.
pub fn mex_loss(f: &QFunction, data: &TransitionDataset, lin: &LinearMdp) -> Result<f64> {
    Problem::new(lin, data, 0.0)?.mex_loss(f)
}

/// `fit_inner_g` at step `h` with an explicit ridge.
pub fn fit_inner_g(
    f: &QFunction,
    policy: &TabularPolicy,
    data: &TransitionDataset,
    lin: &LinearMdp,
    h: usize,
    ridge: f64,
) -> Result<InnerFit> {
    Problem::with_ridge(lin, data, 0.0, ridge)?.fit_inner_g(f, policy, h)
}

/// Full report (value, loss, fitted `g`, gradients).
pub fn vac_objective(
    f: &QFunction,
    policy: &LogLinearPolicy,
    data: &TransitionDataset,
    lin: &LinearMdp,
    alpha: f64,
) -> Result<ObjectiveReport> {
    Problem::new(lin, data, alpha)?.objective(f, policy)
}

/// Gradients of the objective in `θ` and `ω`.
pub fn grad_objective(
    f: &QFunction,
    policy: &LogLinearPolicy,
    data: &TransitionDataset,
    lin: &LinearMdp,
    alpha: f64,
) -> Result<(StepWeights, StepWeights)> {
    let report = vac_objective(f, policy, data, lin, alpha)?;
    Ok((report.grad_theta, report.grad_omega))
}
