//! Online agents and their regret logs.
//!
//! Every agent runs the same loop: compute a policy from the data so far,
//! log its exact value against `V*(ρ)`, collect one episode (episodic) or
//! one sampler draw (discounted) with it, and append the data. Episode `t`
//! (1-based) draws from `stream(seed, Episode, t - 1)`.
//!
//! - `vac`: per-round VAC objective maximised by [`solve_round`].
//! - `vanilla_ac`: `vac` with `α = 0` (no data term).
//! - `eps_greedy`: least-squares Q-iteration with greedy targets, acting
//!   ε-greedily.
//! - `mex`: maximises the MEX objective over `f` and acts greedily; this is
//!   the bilevel scheme (`max_a` inside the loss) that VAC replaces with an
//!   actor.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::approx::{Bounds, LogLinearPolicy, QFunction, StepWeights};
use crate::error::{Error, Result};
use crate::mdp::{
    argmax_lowest, optimal_values, policy_values, rollout, sample_discounted, LinearMdp, TabularPolicy,
};
use crate::objective::{greedy_table, Problem, TransitionDataset};
use crate::rng::{stream, Purpose};
use crate::solver::{solve_round, SolveConfig, Target};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub alpha: f64,
    pub b: f64,
}

fn check_log_arg(what: &str, x: f64) -> Result<f64> {
    if !(x > 1.0) || !x.is_finite() {
        return Err(Error::DegenerateHyperparameters(format!(
            "{what} = {x} must exceed 1; increase T or decrease delta"
        )));
    }
    Ok(x.ln())
}

fn check_common(t: usize, delta: f64, num_actions: usize, dim: usize) -> Result<()> {
    if t < 2 {
        return Err(Error::InvalidArgument(format!("T must be >= 2, got {t}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta must be in (0, 1), got {delta}")));
    }
    if num_actions == 0 || dim == 0 {
        return Err(Error::InvalidArgument("num_actions and dim must be >= 1".into()));
    }
    Ok(())
}

/// Episodic theory setting:
/// `α = sqrt( log(1 + T^{3/2}/d) / (H² T log(log|A|·T/δ)) )`,
/// `B = T log|A| / (dH)`.
pub fn hyperparams_from_theory(t: usize, horizon: usize, num_actions: usize, dim: usize, delta: f64) -> Result<Hyperparams> {
    check_common(t, delta, num_actions, dim)?;
    if horizon == 0 {
        return Err(Error::InvalidArgument("H must be >= 1".into()));
    }
    let (tf, h, d, log_a) = (t as f64, horizon as f64, dim as f64, (num_actions as f64).ln());
    let outer = check_log_arg("log|A|·T/δ", log_a * tf / delta)?;
    let inner = (1.0 + tf.powf(1.5) / d).ln();
    Ok(Hyperparams { alpha: (inner / (h * h * tf * outer)).sqrt(), b: tf * log_a / (d * h) })
}

/// Discounted theory setting:
/// `α = sqrt( (1−γ)² log(1 + T^{3/2}/(d(1−γ)²)) / (T log(log|A|·T/δ)) )`,
/// `B = T log|A| (1−γ) / d`.
pub fn hyperparams_discounted(t: usize, gamma: f64, num_actions: usize, dim: usize, delta: f64) -> Result<Hyperparams> {
    check_common(t, delta, num_actions, dim)?;
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!("gamma must be in [0, 1), got {gamma}")));
    }
    let (tf, d, log_a, w) = (t as f64, dim as f64, (num_actions as f64).ln(), 1.0 - gamma);
    let outer = check_log_arg("log|A|·T/δ", log_a * tf / delta)?;
    let inner = (1.0 + tf.powf(1.5) / (d * w * w)).ln();
    Ok(Hyperparams { alpha: (w * w * inner / (tf * outer)).sqrt(), b: tf * log_a * w / d })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Vac,
    VanillaAc,
    EpsGreedy,
    Mex,
}

impl AgentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Vac => "vac",
            AgentKind::VanillaAc => "vanilla_ac",
            AgentKind::EpsGreedy => "eps_greedy",
            AgentKind::Mex => "mex",
        }
    }
}

/// Resolved agent parameters. `alpha` is ignored by `vanilla_ac` (always
/// 0) and `eps_greedy`; `b` only shapes the policy ball of the actor-critic
/// agents; `epsilon` and `ridge` are used by `eps_greedy` only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentParams {
    pub kind: AgentKind,
    pub alpha: f64,
    pub b: f64,
    pub epsilon: f64,
    pub ridge: f64,
}

impl AgentParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, x: f64| Err(Error::InvalidArgument(format!("{what} out of range: {x}")));
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return bad("alpha", self.alpha);
        }
        if !(self.b > 0.0) || !self.b.is_finite() {
            return bad("B", self.b);
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad("epsilon", self.epsilon);
        }
        if !(self.ridge > 0.0) || !self.ridge.is_finite() {
            return bad("ridge", self.ridge);
        }
        Ok(())
    }
}

/// One logged episode (or discounted round).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretRow {
    pub t: usize,
    pub v_star: f64,
    pub v_pi: f64,
    pub regret_inst: f64,
    pub regret_cum: f64,
    pub objective: f64,
    pub loss: f64,
    pub wall_ms: f64,
    /// Sampler transitions used this round (discounted runs only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretLog {
    pub agent: AgentKind,
    pub seed: u64,
    pub params: AgentParams,
    pub rows: Vec<RegretRow>,
}

impl RegretLog {
    pub fn final_regret(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.regret_cum)
    }

    pub fn regret_at(&self, t: usize) -> Option<f64> {
        t.checked_sub(1).and_then(|i| self.rows.get(i)).map(|r| r.regret_cum)
    }

    pub fn mean_samples(&self) -> Option<f64> {
        let total: Option<u64> = self.rows.iter().map(|r| r.samples).sum();
        total.filter(|_| !self.rows.is_empty()).map(|s| s as f64 / self.rows.len() as f64)
    }
}

/// A run that stopped early; `partial` holds every completed episode.
#[derive(Debug)]
pub struct RunError {
    pub partial: RegretLog,
    pub message: String,
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} seed {} stopped after {} episodes: {}",
            self.partial.agent.as_str(),
            self.partial.seed,
            self.partial.rows.len(),
            self.message
        )
    }
}

impl std::error::Error for RunError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    /// Record per-episode wall-clock time; when off the column is 0 so logs
    /// are byte-stable.
    pub record_wall_clock: bool,
}

/// What a policy-producing step hands back to the loop.
struct Decision {
    policy: TabularPolicy,
    objective: f64,
    loss: f64,
}

/// Shared online loop. `decide` sees the data collected so far.
fn run_loop(
    lin: &LinearMdp,
    episodes: usize,
    seed: u64,
    params: AgentParams,
    opts: RunOptions,
    mut decide: impl FnMut(&TransitionDataset) -> std::result::Result<Decision, String>,
) -> std::result::Result<RegretLog, RunError> {
    let core = lin.core();
    let v_star = optimal_values(core).values.v_rho(core.rho());
    let mut log = RegretLog { agent: params.kind, seed, params, rows: Vec::with_capacity(episodes) };
    let mut data = TransitionDataset::new(core.num_steps());
    let mut cum = 0.0;
    for t in 1..=episodes {
        let start = Instant::now();
        let fail = |log: RegretLog, message: String| RunError { partial: log, message };
        let decision = match decide(&data) {
            Ok(d) => d,
            Err(m) => return Err(fail(log, m)),
        };
        let v_pi = match policy_values(core, &decision.policy) {
            Ok(v) => v.v_rho(core.rho()),
            Err(e) => return Err(fail(log, e.to_string())),
        };
        let mut rng = stream(seed, Purpose::Episode, (t - 1) as u64);
        let samples = if core.is_discounted() {
            match sample_discounted(core, &decision.policy, &mut rng).and_then(|x| {
                data.push_sample(&x, t - 1)?;
                Ok(x.draws)
            }) {
                Ok(n) => Some(n),
                Err(e) => return Err(fail(log, e.to_string())),
            }
        } else {
            if let Err(e) = rollout(core, &decision.policy, &mut rng).and_then(|tr| data.push_trajectory(&tr, t - 1)) {
                return Err(fail(log, e.to_string()));
            }
            None
        };
        let regret = v_star - v_pi;
        cum += regret;
        let wall_ms = if opts.record_wall_clock { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
        log.rows.push(RegretRow {
            t,
            v_star,
            v_pi,
            regret_inst: regret,
            regret_cum: cum,
            objective: decision.objective,
            loss: decision.loss,
            wall_ms,
            samples,
        });
    }
    Ok(log)
}

fn actor_critic(
    lin: &LinearMdp,
    episodes: usize,
    params: AgentParams,
    cfg: &SolveConfig,
    seed: u64,
    opts: RunOptions,
    target: Target,
) -> std::result::Result<RegretLog, RunError> {
    let bounds = Bounds::for_instance(lin, params.b);
    let alpha = if params.kind == AgentKind::VanillaAc { 0.0 } else { params.alpha };
    let mut prev = (QFunction::zeros(lin), LogLinearPolicy::zeros(lin));
    run_loop(lin, episodes, seed, params, opts, |data| {
        let problem = Problem::with_ridge(lin, data, alpha, cfg.ridge).map_err(|e| e.to_string())?;
        let out = solve_round(&problem, &bounds, (&prev.0, &prev.1), cfg, target).map_err(|e| e.to_string())?;
        let policy = match target {
            Target::Vac => out.policy.to_tabular(lin),
            Target::Mex => greedy_table(lin, &out.q.table(lin)),
        };
        prev = (out.q, out.policy);
        Ok(Decision { policy, objective: out.objective, loss: out.loss })
    })
}

/// Episodic VAC. `cfg` must be valid.
pub fn run_vac_episodic(
    lin: &LinearMdp,
    episodes: usize,
    alpha: f64,
    b: f64,
    cfg: &SolveConfig,
    seed: u64,
    opts: RunOptions,
) -> std::result::Result<RegretLog, RunError> {
    vac_in_mode(lin, episodes, alpha, b, cfg, seed, opts, false)
}

#[allow(clippy::too_many_arguments)]
fn vac_in_mode(
    lin: &LinearMdp,
    episodes: usize,
    alpha: f64,
    b: f64,
    cfg: &SolveConfig,
    seed: u64,
    opts: RunOptions,
    discounted: bool,
) -> std::result::Result<RegretLog, RunError> {
    let params = AgentParams { kind: AgentKind::Vac, alpha, b, epsilon: 0.0, ridge: 1.0 };
    if lin.core().is_discounted() != discounted {
        let expected = if discounted { "discounted" } else { "episodic" };
        return Err(RunError {
            partial: RegretLog { agent: params.kind, seed, params, rows: Vec::new() },
            message: Error::WrongMode { expected }.to_string(),
        });
    }
    run_agent(lin, episodes, params, cfg, seed, opts)
}

/// Discounted VAC: one sampler draw per round, logged with its length.
pub fn run_vac_discounted(
    lin: &LinearMdp,
    rounds: usize,
    alpha: f64,
    b: f64,
    cfg: &SolveConfig,
    seed: u64,
    opts: RunOptions,
) -> std::result::Result<RegretLog, RunError> {
    vac_in_mode(lin, rounds, alpha, b, cfg, seed, opts, true)
}

/// Runs any agent kind; the instance's mode selects rollouts or the sampler.
pub fn run_agent(
    lin: &LinearMdp,
    episodes: usize,
    params: AgentParams,
    cfg: &SolveConfig,
    seed: u64,
    opts: RunOptions,
) -> std::result::Result<RegretLog, RunError> {
    let early = |message: String| RunError {
        partial: RegretLog { agent: params.kind, seed, params, rows: Vec::new() },
        message,
    };
    params.validate().map_err(|e| early(e.to_string()))?;
    cfg.validate().map_err(|e| early(e.to_string()))?;
    match params.kind {
        AgentKind::Vac | AgentKind::VanillaAc => actor_critic(lin, episodes, params, cfg, seed, opts, Target::Vac),
        AgentKind::Mex => actor_critic(lin, episodes, params, cfg, seed, opts, Target::Mex),
        AgentKind::EpsGreedy => run_loop(lin, episodes, seed, params, opts, |data| {
            let fit = fitted_q_iteration(lin, data, params.ridge);
            let table = fit.q.table(lin);
            let policy = greedy_table(lin, &table).mix_uniform(params.epsilon);
            let core = lin.core();
            let na = core.num_actions();
            let scale = core.gamma().map_or(1.0, |g| 1.0 - g);
            let objective = scale
                * core
                    .rho()
                    .iter()
                    .enumerate()
                    .map(|(s, p)| p * table.step(0)[s * na..(s + 1) * na].iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x)))
                    .sum::<f64>();
            Ok(Decision { policy, objective, loss: fit.residual })
        }),
    }
}

pub struct QIteration {
    pub q: QFunction,
    /// Sum of squared regression residuals over all steps.
    pub residual: f64,
}

/// Least-squares Q-iteration: each `f_h` is the ridge regression of
/// `r + κ·max_a f_{next}(s', a)` on `φ_h(s, a)`.
///
/// Episodic instances fit backward from `f_H = 0` in one pass. Discounted
/// instances repeat the stationary fit `⌈log(1e-6)/log γ⌉` times from
/// `f = 0` (capped at 200), one fitted-value-iteration sweep each.
pub fn fitted_q_iteration(lin: &LinearMdp, data: &TransitionDataset, ridge: f64) -> QIteration {
    let core = lin.core();
    let d = lin.dim();
    let na = core.num_actions();
    let mut theta = StepWeights::zeros(lin.num_steps(), d);
    let mut residual = 0.0;
    let order: Vec<usize> = match core.gamma() {
        Some(g) => {
            let sweeps = if g > 0.0 { ((1e-6f64).ln() / g.ln()).ceil().clamp(1.0, 200.0) as usize } else { 1 };
            vec![0; sweeps]
        }
        None => (0..lin.num_steps()).rev().collect(),
    };
    for h in order {
        let next = core.next_step(h);
        let kappa = core.target_discount();
        let mut gram = DMatrix::<f64>::identity(d, d) * ridge;
        let mut rhs = DVector::<f64>::zeros(d);
        let mut targets = Vec::with_capacity(data.len(h));
        for tuple in data.tuples(h) {
            let y = tuple.reward
                + next.map_or(0.0, |n| {
                    let feats = lin.step_features(n);
                    let row: Vec<f64> = (0..na)
                        .map(|a| {
                            let p = core.pair(tuple.next_state, a);
                            feats[p * d..(p + 1) * d].iter().zip(theta.step(n)).map(|(x, w)| x * w).sum()
                        })
                        .collect();
                    kappa * row[argmax_lowest(&row)]
                });
            let phi = DVector::from_column_slice(lin.feature(h, tuple.state, tuple.action));
            gram.ger(1.0, &phi, &phi, 1.0);
            rhs.axpy(y, &phi, 1.0);
            targets.push((phi, y));
        }
        let solved = gram.cholesky().expect("ridge Gram matrix is positive definite").solve(&rhs);
        residual = targets.iter().map(|(phi, y)| (y - phi.dot(&solved)).powi(2)).sum();
        theta.step_mut(h).copy_from_slice(solved.as_slice());
    }
    QIteration { q: QFunction { theta }, residual }
}
