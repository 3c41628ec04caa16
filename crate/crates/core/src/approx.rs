//! Linear Q-functions and log-linear policies over a [`LinearMdp`]'s
//! features, with the norm balls they live in.
//!
//! Episodic classes hold one weight vector per step. For step `h`
//! (zero-based) of a horizon-`H` instance the Q ball is
//! `‖θ_h‖₂ ≤ (H-h)√d` with `max |φ_hᵀθ_h| ≤ H-h`, and the policy ball is
//! `‖ω_h‖₂ ≤ B·H·√d`. Discounted classes hold a single vector with
//! `‖θ‖₂ ≤ √d/(1-γ)`, `‖f‖∞ ≤ 1/(1-γ)` and `‖ω‖₂ ≤ B√d/(1-γ)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{LinearMdp, TabularPolicy};

pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// Per-step weight vectors; shared representation of θ and ω.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "BTreeMap<usize, Vec<f64>>", try_from = "BTreeMap<usize, Vec<f64>>")]
pub struct StepWeights(Vec<Vec<f64>>);

impl From<StepWeights> for BTreeMap<usize, Vec<f64>> {
    fn from(w: StepWeights) -> Self {
        w.0.into_iter().enumerate().collect()
    }
}

impl TryFrom<BTreeMap<usize, Vec<f64>>> for StepWeights {
    type Error = String;

    fn try_from(map: BTreeMap<usize, Vec<f64>>) -> std::result::Result<Self, String> {
        if map.keys().copied().ne(0..map.len()) {
            return Err("step keys must be 0..H without gaps".into());
        }
        let steps: Vec<Vec<f64>> = map.into_values().collect();
        if steps.windows(2).any(|w| w[0].len() != w[1].len()) {
            return Err("all steps must have the same dimension".into());
        }
        Ok(StepWeights(steps))
    }
}

impl StepWeights {
    pub fn zeros(num_steps: usize, dim: usize) -> Self {
        Self(vec![vec![0.0; dim]; num_steps])
    }

    pub fn from_steps(steps: Vec<Vec<f64>>) -> Self {
        Self(steps)
    }

    pub fn num_steps(&self) -> usize {
        self.0.len()
    }

    pub fn dim(&self) -> usize {
        self.0.first().map_or(0, Vec::len)
    }

    pub fn step(&self, h: usize) -> &[f64] {
        &self.0[h]
    }

    pub fn step_mut(&mut self, h: usize) -> &mut [f64] {
        &mut self.0[h]
    }

    pub fn steps(&self) -> &[Vec<f64>] {
        &self.0
    }

    /// `self + scale·direction`, step by step.
    pub fn add_scaled(&self, scale: f64, direction: &StepWeights) -> StepWeights {
        StepWeights(
            self.0
                .iter()
                .zip(&direction.0)
                .map(|(x, d)| x.iter().zip(d).map(|(a, b)| a + scale * b).collect())
                .collect(),
        )
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|x| x.is_finite())
    }

    fn check_shape(&self, lin: &LinearMdp) -> Result<()> {
        if self.num_steps() != lin.num_steps() {
            return Err(Error::Dimension { expected: lin.num_steps(), got: self.num_steps() });
        }
        if self.dim() != lin.dim() {
            return Err(Error::Dimension { expected: lin.dim(), got: self.dim() });
        }
        Ok(())
    }
}

/// `f_h(s,a) = φ_h(s,a)ᵀθ_h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QFunction {
    pub theta: StepWeights,
}

/// `π_h(a|s) ∝ exp(φ_h(s,a)ᵀω_h)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LogLinearPolicy {
    pub omega: StepWeights,
}

/// `f_h(s,a)` for every step and pair, indexed `[step][pair]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    pub num_pairs: usize,
    pub values: Vec<f64>,
}

impl QTable {
    pub fn step(&self, h: usize) -> &[f64] {
        &self.values[h * self.num_pairs..(h + 1) * self.num_pairs]
    }
}

fn step_table(lin: &LinearMdp, h: usize, weights: &[f64], out: &mut Vec<f64>) {
    out.extend(lin.step_features(h).chunks(lin.dim()).map(|phi| dot(phi, weights)));
}

impl QFunction {
    pub fn zeros(lin: &LinearMdp) -> Self {
        Self { theta: StepWeights::zeros(lin.num_steps(), lin.dim()) }
    }

    pub fn new(lin: &LinearMdp, theta: StepWeights) -> Result<Self> {
        theta.check_shape(lin)?;
        Ok(Self { theta })
    }

    /// `φ_h(s,a)ᵀθ_h`; the episodic boundary step `H` evaluates to 0.
    pub fn eval(&self, lin: &LinearMdp, h: usize, s: usize, a: usize) -> Result<f64> {
        let core = lin.core();
        core.check_state_action(s, a)?;
        if core.horizon() == Some(h) {
            return Ok(0.0);
        }
        core.check_step(h)?;
        Ok(dot(lin.feature(h, s, a), self.theta.step(h)))
    }

    pub fn table(&self, lin: &LinearMdp) -> QTable {
        let mut values = Vec::with_capacity(lin.num_steps() * lin.core().num_pairs());
        for h in 0..lin.num_steps() {
            step_table(lin, h, self.theta.step(h), &mut values);
        }
        QTable { num_pairs: lin.core().num_pairs(), values }
    }

    pub fn to_checkpoint(&self) -> String {
        serde_json::to_string(self).expect("weights serialise")
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    out
}

pub fn softmax_in_place(x: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in x.iter_mut() {
        *v /= total;
    }
}

impl LogLinearPolicy {
    pub fn zeros(lin: &LinearMdp) -> Self {
        Self { omega: StepWeights::zeros(lin.num_steps(), lin.dim()) }
    }

    pub fn new(lin: &LinearMdp, omega: StepWeights) -> Result<Self> {
        omega.check_shape(lin)?;
        Ok(Self { omega })
    }

    pub fn probs(&self, lin: &LinearMdp, h: usize, s: usize) -> Result<Vec<f64>> {
        let core = lin.core();
        core.check_step(h)?;
        core.check_state_action(s, 0)?;
        let logits: Vec<f64> =
            (0..core.num_actions()).map(|a| dot(lin.feature(h, s, a), self.omega.step(h))).collect();
        Ok(softmax(&logits))
    }

    /// Action probabilities for every step and state.
    pub fn to_tabular(&self, lin: &LinearMdp) -> TabularPolicy {
        let core = lin.core();
        let mut probs = Vec::with_capacity(core.num_steps() * core.num_pairs());
        for h in 0..lin.num_steps() {
            let start = probs.len();
            step_table(lin, h, self.omega.step(h), &mut probs);
            for row in probs[start..].chunks_mut(core.num_actions()) {
                softmax_in_place(row);
            }
        }
        // softmax rows sum to 1 within a few ulps, well inside the tolerance
        TabularPolicy::new(core.num_steps(), core.num_states(), core.num_actions(), probs)
            .expect("softmax rows are distributions")
    }

    pub fn to_checkpoint(&self) -> String {
        serde_json::to_string(self).expect("weights serialise")
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Radii of the Q-function and policy classes for one instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bounds {
    /// `‖θ_h‖₂` limit per step.
    pub q_norm: Vec<f64>,
    /// `max_{s,a} |f_h(s,a)|` limit per step.
    pub q_sup: Vec<f64>,
    /// `‖ω_h‖₂` limit per step.
    pub policy_norm: Vec<f64>,
}

impl Bounds {
    /// Class radii for policy-ball constant `b` (the `B` of the log-linear
    /// class).
    pub fn for_instance(lin: &LinearMdp, b: f64) -> Self {
        let core = lin.core();
        let root_d = (lin.dim() as f64).sqrt();
        match core.horizon() {
            Some(horizon) => {
                let sup: Vec<f64> = (0..horizon).map(|h| core.value_bound(h)).collect();
                Self {
                    q_norm: sup.iter().map(|s| s * root_d).collect(),
                    q_sup: sup,
                    policy_norm: vec![b * horizon as f64 * root_d; horizon],
                }
            }
            None => {
                let scale = core.value_bound(0);
                Self { q_norm: vec![root_d * scale], q_sup: vec![scale], policy_norm: vec![b * root_d * scale] }
            }
        }
    }
}

/// Scales `v` by `bound/measure(v)` when the measure exceeds `bound`, then
/// shaves ulps until the measure is within the bound, so that a second call
/// leaves the result bit-for-bit unchanged.
fn shrink_onto(v: &mut [f64], bound: f64, measure: impl Fn(&[f64]) -> f64) {
    let m = measure(v);
    if m <= bound {
        return;
    }
    let scale = bound / m;
    v.iter_mut().for_each(|x| *x *= scale);
    while measure(v) > bound {
        v.iter_mut().for_each(|x| *x *= 1.0 - 4.0 * f64::EPSILON);
    }
}

pub(crate) fn sup_on_instance(lin: &LinearMdp, h: usize, weights: &[f64]) -> f64 {
    lin.step_features(h).chunks(lin.dim()).fold(0.0, |m, phi| m.max(dot(phi, weights).abs()))
}

/// Radial projection onto the Q ball, then a second radial rescale so that
/// the largest `|φ_hᵀθ_h|` over the instance's pairs is within the sup
/// bound.
pub fn project_q(f: &QFunction, lin: &LinearMdp, bounds: &Bounds) -> QFunction {
    let mut out = f.clone();
    for h in 0..out.theta.num_steps() {
        let w = out.theta.step_mut(h);
        shrink_onto(w, bounds.q_norm[h], norm);
        shrink_onto(w, bounds.q_sup[h], |v| sup_on_instance(lin, h, v));
    }
    out
}

/// Euclidean (nearest-point) projection onto the Q class, by Dykstra's
/// alternating projections over the ball and the slabs
/// `|φ_hᵀθ_h| ≤ sup` of every distinct feature, finished with [`project_q`]
/// so the result satisfies both constraints exactly.
///
/// Unlike the radial map, the nearest point keeps coordinates that are not
/// pressing on a constraint where they are, which projected gradient ascent
/// needs to make progress along a face of the class.
pub fn project_q_nearest(f: &QFunction, lin: &LinearMdp, bounds: &Bounds) -> QFunction {
    const SWEEPS: usize = 500;
    const TOL: f64 = 1e-13;
    let mut out = f.clone();
    let dim = lin.dim();
    for h in 0..out.theta.num_steps() {
        let (radius, sup) = (bounds.q_norm[h], bounds.q_sup[h]);
        let x0 = out.theta.step(h).to_vec();
        if norm(&x0) <= radius && sup_on_instance(lin, h, &x0) <= sup {
            continue;
        }
        let mut rows: Vec<&[f64]> = lin.step_features(h).chunks(dim).filter(|p| dot(p, p) > 0.0).collect();
        rows.sort_by(|a, b| a.partial_cmp(b).unwrap());
        rows.dedup();
        let mut x = x0;
        let mut incr = vec![vec![0.0; dim]; rows.len() + 1];
        for _ in 0..SWEEPS {
            let mut moved = 0.0f64;
            for (k, inc) in incr.iter_mut().enumerate() {
                let y: Vec<f64> = x.iter().zip(inc.iter()).map(|(a, b)| a + b).collect();
                let mut p = y.clone();
                match rows.get(k) {
                    Some(phi) => {
                        let v = dot(phi, &p);
                        if v.abs() > sup {
                            let shift = (v - sup.copysign(v)) / dot(phi, phi);
                            p.iter_mut().zip(phi.iter()).for_each(|(a, b)| *a -= shift * b);
                        }
                    }
                    None => {
                        let n = norm(&p);
                        if n > radius {
                            p.iter_mut().for_each(|a| *a *= radius / n);
                        }
                    }
                }
                for i in 0..dim {
                    inc[i] = y[i] - p[i];
                    moved = moved.max((p[i] - x[i]).abs());
                }
                x = p;
            }
            if moved < TOL {
                break;
            }
        }
        out.theta.step_mut(h).copy_from_slice(&x);
    }
    project_q(&out, lin, bounds)
}

pub fn project_policy(pi: &LogLinearPolicy, bounds: &Bounds) -> LogLinearPolicy {
    let mut out = pi.clone();
    for h in 0..out.omega.num_steps() {
        shrink_onto(out.omega.step_mut(h), bounds.policy_norm[h], norm);
    }
    out
}

/// Whether `f` satisfies both Q-class constraints at every step.
pub fn q_in_class(f: &QFunction, lin: &LinearMdp, bounds: &Bounds) -> bool {
    (0..f.theta.num_steps()).all(|h| {
        norm(f.theta.step(h)) <= bounds.q_norm[h] && sup_on_instance(lin, h, f.theta.step(h)) <= bounds.q_sup[h]
    })
}

pub fn policy_in_class(pi: &LogLinearPolicy, bounds: &Bounds) -> bool {
    (0..pi.omega.num_steps()).all(|h| norm(pi.omega.step(h)) <= bounds.policy_norm[h])
}

/// `V^π_{f,h}(s) = Σ_a π_h(a|s) f_h(s,a)`.
pub fn state_value_of_f(f: &QFunction, pi: &TabularPolicy, lin: &LinearMdp, h: usize, s: usize) -> Result<f64> {
    pi.check_against(lin.core())?;
    lin.core().check_step(h)?;
    let mut v = 0.0;
    for (a, &p) in pi.probs(h, s).iter().enumerate() {
        v += p * f.eval(lin, h, s, a)?;
    }
    Ok(v)
}

/// `V^π_f(ρ) = Σ_s ρ(s) Σ_a π_0(a|s) f_0(s,a)`, by exact summation.
pub fn value_of_f_under_pi(f: &QFunction, pi: &TabularPolicy, lin: &LinearMdp, rho: &[f64]) -> Result<f64> {
    if rho.len() != lin.core().num_states() {
        return Err(Error::Dimension { expected: lin.core().num_states(), got: rho.len() });
    }
    let mut total = 0.0;
    for (s, &p) in rho.iter().enumerate() {
        if p != 0.0 {
            total += p * state_value_of_f(f, pi, lin, 0, s)?;
        }
    }
    Ok(total)
}
