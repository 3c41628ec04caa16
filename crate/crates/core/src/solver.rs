//! Approximate maximisation of the per-episode objective by alternating
//! projected gradient ascent: a critic block on `θ` with `ω` held fixed,
//! then an actor block on `ω` with `θ` held fixed.
//!
//! Critic steps use the nearest-point projection onto the Q class so that
//! iterates can slide along an active sup constraint; the radial map alone
//! stalls there.

use serde::{Deserialize, Serialize};

use crate::approx::{project_policy, project_q, project_q_nearest, Bounds, LogLinearPolicy, QFunction, StepWeights};
use crate::error::{Error, Result};
use crate::mdp::{LinearMdp, TabularPolicy};
use crate::objective::{greedy_table, Problem, DEFAULT_RIDGE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub critic_steps: usize,
    pub actor_steps: usize,
    pub outer_rounds: usize,
    pub step_theta: f64,
    pub step_omega: f64,
    /// A block stops once a step that had to be shortened (or is at the
    /// growth cap) gains less than this; the solve stops once a whole round
    /// does.
    pub tolerance: f64,
    pub warm_start: bool,
    /// Halve a step that lowers the objective, up to `max_halvings` times;
    /// after an accepted step the next trial step doubles (at most 1024
    /// times the configured size).
    pub backtracking: bool,
    pub max_halvings: u32,
    /// Ridge of the inner least-squares fit.
    pub ridge: f64,
    /// Start each actor block by trying `softmax(c·f)` policies.
    pub softmax_candidates: bool,
    /// Actor steps first try the natural-gradient direction (the policy
    /// gradient with the `π(a|s)` factor removed), which keeps moving when
    /// the softmax saturates; the plain gradient is the fallback.
    pub natural_actor: bool,
    /// After the main ascent, run it again from an optimistic critic (`f`
    /// at its sup bound along the summed feature direction) and keep the
    /// better end point. Plain ascent cannot leave a near-deterministic
    /// policy for pairs it never visits, since their gradient is zero.
    pub optimistic_restart: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            critic_steps: 50,
            actor_steps: 50,
            outer_rounds: 10,
            step_theta: 0.05,
            step_omega: 0.5,
            tolerance: 1e-7,
            warm_start: true,
            backtracking: true,
            max_halvings: 20,
            ridge: DEFAULT_RIDGE,
            softmax_candidates: true,
            natural_actor: true,
            optimistic_restart: false,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.critic_steps == 0 || self.actor_steps == 0 || self.outer_rounds == 0 {
            return Err(Error::InvalidArgument("solver step counts must be >= 1".into()));
        }
        for (name, x) in [("step_theta", self.step_theta), ("step_omega", self.step_omega), ("tolerance", self.tolerance)]
        {
            if !(x > 0.0) || !x.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be finite and > 0, got {x}")));
            }
        }
        if !(self.ridge >= 0.0) || !self.ridge.is_finite() {
            return Err(Error::InvalidArgument(format!("ridge must be finite and >= 0, got {}", self.ridge)));
        }
        Ok(())
    }
}

/// Which objective the solver ascends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// Joint VAC objective over `(θ, ω)`.
    Vac,
    /// MEX objective over `θ` alone; the policy is the greedy one of `f`.
    Mex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Start,
    Critic,
    Actor,
    Restart,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Start => "start",
            Phase::Critic => "critic",
            Phase::Actor => "actor",
            Phase::Restart => "restart",
        }
    }
}

/// One accepted iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub round: usize,
    pub phase: Phase,
    pub iteration: usize,
    pub objective: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub q: QFunction,
    pub policy: LogLinearPolicy,
    pub objective: f64,
    pub loss: f64,
    pub value_term: f64,
    pub trace: Vec<TraceRow>,
    pub evaluations: usize,
}

/// Error from a solve whose objective became non-finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    pub trace: Vec<TraceRow>,
}

impl std::fmt::Display for Divergence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "objective became non-finite after {} accepted iterates", self.trace.len())
    }
}

impl std::error::Error for Divergence {}

struct Point {
    q: QFunction,
    policy: LogLinearPolicy,
    table: TabularPolicy,
    objective: f64,
    loss: f64,
    value_term: f64,
    coeff_q: Vec<f64>,
    coeff_logit: Vec<f64>,
    coeff_adv: Vec<f64>,
}

struct Ascent<'p, 'a> {
    problem: &'p Problem<'a>,
    bounds: &'p Bounds,
    cfg: &'p SolveConfig,
    target: Target,
    evaluations: usize,
    trace: Vec<TraceRow>,
    /// Current trial step per block; grows after accepted steps when
    /// backtracking is on.
    eta: [f64; 2],
}

const MAX_GROWTH: f64 = 1024.0;

impl Ascent<'_, '_> {
    fn point(&mut self, q: QFunction, policy: LogLinearPolicy, table: Option<TabularPolicy>) -> Result<Point, Divergence> {
        let lin = self.problem.lin();
        let qtable = q.table(lin);
        let table = match (self.target, table) {
            (Target::Mex, _) => greedy_table(lin, &qtable),
            (Target::Vac, Some(t)) => t,
            (Target::Vac, None) => policy.to_tabular(lin),
        };
        let eval = self.problem.evaluate(&qtable, &table, true);
        self.evaluations += 1;
        if !eval.objective.is_finite() || !q.theta.is_finite() || !policy.omega.is_finite() {
            return Err(Divergence { trace: self.trace.clone() });
        }
        Ok(Point {
            q,
            policy,
            table,
            objective: eval.objective,
            loss: eval.loss,
            value_term: eval.value_term,
            coeff_q: eval.coeff_q,
            coeff_logit: eval.coeff_logit,
            coeff_adv: eval.coeff_adv,
        })
    }

    /// One backtracking step; `None` when no trial step improved. The flag
    /// reports whether the step had to be shortened.
    fn step(&mut self, cur: &Point, phase: Phase) -> Result<Option<(Point, bool)>, Divergence> {
        if phase == Phase::Actor && self.cfg.natural_actor {
            let dir = self.problem.pull_back(&cur.coeff_adv);
            if let Some(found) = self.step_along(cur, phase, dir)? {
                return Ok(Some(found));
            }
        }
        let grad = match phase {
            Phase::Critic => self.problem.pull_back(&cur.coeff_q),
            _ => self.problem.pull_back(&cur.coeff_logit),
        };
        self.step_along(cur, phase, grad)
    }

    fn step_along(&mut self, cur: &Point, phase: Phase, grad: StepWeights) -> Result<Option<(Point, bool)>, Divergence> {
        let (slot, base) = match phase {
            Phase::Critic => (0, self.cfg.step_theta),
            _ => (1, self.cfg.step_omega),
        };
        let mut eta = self.eta[slot];
        if grad.max_abs() == 0.0 {
            return Ok(None);
        }
        let lin = self.problem.lin();
        for halvings in 0..=self.cfg.max_halvings {
            let trial = match phase {
                Phase::Critic => {
                    let q = project_q_nearest(&QFunction { theta: cur.q.theta.add_scaled(eta, &grad) }, lin, self.bounds);
                    self.point(q, cur.policy.clone(), Some(cur.table.clone()))?
                }
                _ => {
                    let policy =
                        project_policy(&LogLinearPolicy { omega: cur.policy.omega.add_scaled(eta, &grad) }, self.bounds);
                    self.point(cur.q.clone(), policy, None)?
                }
            };
            if !self.cfg.backtracking {
                return Ok(Some((trial, false)));
            }
            if trial.objective >= cur.objective {
                self.eta[slot] = (2.0 * eta).min(MAX_GROWTH * base);
                return Ok(Some((trial, halvings > 0 || eta >= MAX_GROWTH * base)));
            }
            eta *= 0.5;
        }
        Ok(None)
    }

    /// `softmax(c·f)` with `ω_h = c_h·θ_h`, `c_h = 4^{-k}·radius_h/‖θ_h‖`.
    fn softmax_policy(&self, q: &QFunction, k: i32) -> LogLinearPolicy {
        let shrink = 0.25f64.powi(k);
        let steps = q
            .theta
            .steps()
            .iter()
            .enumerate()
            .map(|(h, w)| {
                let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
                let c = if n > 0.0 { shrink * self.bounds.policy_norm[h] / n } else { 0.0 };
                w.iter().map(|x| c * x).collect()
            })
            .collect();
        project_policy(&LogLinearPolicy { omega: StepWeights::from_steps(steps) }, self.bounds)
    }

    /// Best of the policies `softmax(c·f)` for six scales `c`, if it beats
    /// `cur`.
    fn jump(&mut self, cur: &Point) -> Result<Option<Point>, Divergence> {
        let mut best: Option<Point> = None;
        for k in 0..6 {
            let policy = self.softmax_policy(&cur.q, k);
            let trial = self.point(cur.q.clone(), policy, None)?;
            if best.as_ref().is_none_or(|b| trial.objective > b.objective) {
                best = Some(trial);
            }
        }
        Ok(best.filter(|b| b.objective > cur.objective))
    }

    fn keep_best(cur: &Point, best: &mut Point) {
        if cur.objective > best.objective {
            *best = Point {
                q: cur.q.clone(),
                policy: cur.policy.clone(),
                table: cur.table.clone(),
                coeff_q: Vec::new(),
                coeff_logit: Vec::new(),
                coeff_adv: Vec::new(),
                ..*cur
            };
        }
    }

    /// Up to `steps` ascent steps; `accepted(iteration, point)` sees every
    /// accepted iterate.
    fn ascend(
        &mut self,
        mut cur: Point,
        phase: Phase,
        steps: usize,
        accepted: &mut dyn FnMut(usize, &Point),
    ) -> Result<Point, Divergence> {
        for iteration in 0..steps {
            let Some((next, limited)) = self.step(&cur, phase)? else { break };
            let gain = next.objective - cur.objective;
            cur = next;
            accepted(iteration, &cur);
            if self.cfg.backtracking && limited && gain < self.cfg.tolerance {
                break;
            }
        }
        Ok(cur)
    }

    fn block(&mut self, mut cur: Point, phase: Phase, round: usize, best: &mut Point) -> Result<Point, Divergence> {
        let mut steps = match phase {
            Phase::Critic => self.cfg.critic_steps,
            _ => self.cfg.actor_steps,
        };
        let mut offset = 0;
        if phase == Phase::Actor && self.cfg.softmax_candidates {
            if let Some(next) = self.jump(&cur)? {
                self.trace.push(TraceRow { round, phase, iteration: 0, objective: next.objective, loss: next.loss });
                cur = next;
                Self::keep_best(&cur, best);
                offset = 1;
                steps -= 1;
            }
        }
        let mut rows = Vec::new();
        let cur = self.ascend(cur, phase, steps, &mut |iteration, p| {
            rows.push(TraceRow { round, phase, iteration: iteration + offset, objective: p.objective, loss: p.loss });
            Self::keep_best(p, best);
        })?;
        self.trace.extend(rows);
        Ok(cur)
    }
}

impl Ascent<'_, '_> {
    /// Alternating blocks from `cur`; returns the best iterate and the
    /// number of rounds used. Accepted iterates go to the trace only when
    /// `record` is set.
    fn run(&mut self, mut cur: Point, first_round: usize, record: bool) -> Result<(Point, usize), Divergence> {
        let mut best = Point {
            q: cur.q.clone(),
            policy: cur.policy.clone(),
            table: cur.table.clone(),
            coeff_q: Vec::new(),
            coeff_logit: Vec::new(),
            coeff_adv: Vec::new(),
            ..cur
        };
        let kept = self.trace.len();
        let mut rounds = 0;
        for round in first_round..first_round + self.cfg.outer_rounds {
            rounds += 1;
            let round_start = best.objective;
            cur = self.block(cur, Phase::Critic, round, &mut best)?;
            if self.target == Target::Vac {
                cur = self.block(cur, Phase::Actor, round, &mut best)?;
            }
            if self.cfg.backtracking && best.objective - round_start < self.cfg.tolerance {
                break;
            }
        }
        if !record {
            self.trace.truncate(kept);
        }
        Ok((best, first_round + rounds))
    }
}

/// `θ_h = c_h·Σ_{s,a} φ_h(s,a)` scaled so that `max |f_h|` sits at the sup
/// bound, then projected into the class.
fn optimistic_q(lin: &LinearMdp, bounds: &Bounds) -> QFunction {
    let core = lin.core();
    let (ns, na) = (core.num_states(), core.num_actions());
    let steps = (0..lin.num_steps())
        .map(|h| {
            let mut sum = vec![0.0; lin.dim()];
            for s in 0..ns {
                for a in 0..na {
                    sum.iter_mut().zip(lin.feature(h, s, a)).for_each(|(t, x)| *t += x);
                }
            }
            let peak = (0..ns)
                .flat_map(|s| (0..na).map(move |a| (s, a)))
                .map(|(s, a)| lin.feature(h, s, a).iter().zip(&sum).map(|(x, y)| x * y).sum::<f64>().abs())
                .fold(0.0, f64::max);
            let c = if peak > 0.0 { bounds.q_sup[h] / peak } else { 0.0 };
            sum.iter().map(|x| c * x).collect()
        })
        .collect();
    project_q_nearest(&QFunction { theta: StepWeights::from_steps(steps) }, lin, bounds)
}

/// Runs `outer_rounds` of {critic block, actor block} and returns the best
/// evaluated iterate.
///
/// With `warm_start` the ascent starts from `prev` (projected into the
/// classes), otherwise from zero weights. The start point is itself a
/// candidate, so the returned objective is never below it. With
/// `optimistic_restart` a second, untraced ascent follows; if it ends
/// higher, a single `restart` row records its end point.
pub fn solve_round(
    problem: &Problem<'_>,
    bounds: &Bounds,
    prev: (&QFunction, &LogLinearPolicy),
    cfg: &SolveConfig,
    target: Target,
) -> Result<SolveOutcome, Divergence> {
    let lin = problem.lin();
    let (q0, p0) = if cfg.warm_start {
        (project_q(prev.0, lin, bounds), project_policy(prev.1, bounds))
    } else {
        (QFunction::zeros(lin), LogLinearPolicy::zeros(lin))
    };
    let mut ascent = Ascent {
        problem,
        bounds,
        cfg,
        target,
        evaluations: 0,
        trace: Vec::new(),
        eta: [cfg.step_theta, cfg.step_omega],
    };
    let start = ascent.point(q0, p0.clone(), None)?;
    ascent.trace.push(TraceRow { round: 0, phase: Phase::Start, iteration: 0, objective: start.objective, loss: start.loss });
    let (mut best, rounds) = ascent.run(start, 0, true)?;
    if cfg.optimistic_restart {
        let start = ascent.point(optimistic_q(lin, bounds), p0, None)?;
        let (other, _) = ascent.run(start, rounds, false)?;
        if other.objective > best.objective {
            ascent.trace.push(TraceRow {
                round: rounds,
                phase: Phase::Restart,
                iteration: 0,
                objective: other.objective,
                loss: other.loss,
            });
            best = other;
        }
    }
    Ok(SolveOutcome {
        q: best.q,
        policy: best.policy,
        objective: best.objective,
        loss: best.loss,
        value_term: best.value_term,
        trace: ascent.trace,
        evaluations: ascent.evaluations,
    })
}
