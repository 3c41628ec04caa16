//! Executable checks of the identities the method rests on.
//!
//! Each check is deterministic given its seed and parameters and returns a
//! [`CheckReport`] with a pass flag, the largest measured error and a
//! free-form JSON `details` object. [`run_all`] runs the five default
//! checks.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::Serialize;
use serde_json::{json, Value};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::approx::{norm, softmax, Bounds};
use crate::error::Result;
use crate::estimate::{sampler_stats, total_variation};
use crate::exec::Exec;
use crate::mdp::{
    make_instance, optimal_values, visitation, InstanceKind, LinearMdp, Mode, TabularCore, TabularPolicy, Values,
};
use crate::rng::{stream, Purpose, Rng};

/// Slack on class-membership tests for fitted weights.
const MEMBERSHIP_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CheckReport {
    #[serde(skip)]
    pub name: &'static str,
    pub pass: bool,
    pub max_error: f64,
    pub details: Value,
}

/// Which side carries which square in the dual reparameterisation.
///
/// With `λ = (Q − g)/β`, expanding gives
/// `λ(δ − Q) + (β/2)λ² = [(δ − g)² − (δ − Q)²]/(2β)`. `Swapped` is the
/// opposite orientation and must fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Orientation {
    #[default]
    Correct,
    Swapped,
}

fn reparam_sides(delta: f64, q: f64, g: f64, beta: f64, orientation: Orientation) -> (f64, f64) {
    let lambda = (q - g) / beta;
    let lhs = lambda * (delta - q) + 0.5 * beta * lambda * lambda;
    let (a, b) = ((delta - g).powi(2), (delta - q).powi(2));
    let rhs = match orientation {
        Orientation::Correct => (a - b) / (2.0 * beta),
        Orientation::Swapped => (b - a) / (2.0 * beta),
    };
    (lhs, rhs)
}

pub fn check_reparam_identity(samples: usize, seed: u64, orientation: Orientation) -> CheckReport {
    let mut rng = stream(seed, Purpose::Verify, 0);
    // δ = Q, β = 1, g = Q − 1: λ = 1, LHS = 0.5.
    let (lhs, rhs) = reparam_sides(0.3, 0.3, -0.7, 1.0, orientation);
    let fixture = (lhs - 0.5).abs().max((rhs - 0.5).abs());
    let mut max_error: f64 = fixture;
    for _ in 0..samples {
        let delta = rng.random_range(-5.0..5.0);
        let q = rng.random_range(-5.0..5.0);
        let g = rng.random_range(-5.0..5.0);
        let beta = rng.random_range(0.1..10.0);
        let (lhs, rhs) = reparam_sides(delta, q, g, beta, orientation);
        max_error = max_error.max((lhs - rhs).abs());
    }
    CheckReport {
        name: "reparam_identity",
        pass: max_error <= 1e-9,
        max_error,
        details: json!({ "samples": samples, "fixtureError": fixture, "fixtureLhs": lhs, "fixtureRhs": rhs }),
    }
}

fn random_policy(core: &TabularCore, rng: &mut Rng) -> TabularPolicy {
    TabularPolicy::from_fn(core, |_, _| {
        let logits: Vec<f64> = (0..core.num_actions()).map(|_| rng.random_range(-3.0..3.0)).collect();
        softmax(&logits)
    })
    .expect("softmax rows are distributions")
}

/// Least-squares weights reproducing `target[pair]` at step `h`, and the
/// largest pointwise residual.
fn interpolate(lin: &LinearMdp, h: usize, target: &[f64]) -> (Vec<f64>, f64) {
    let d = lin.dim();
    let phi = DMatrix::from_row_slice(target.len(), d, lin.step_features(h));
    let y = DVector::from_column_slice(target);
    let theta = phi.clone().svd(true, true).solve(&y, 1e-12).expect("both factors were computed");
    let residual = (&phi * &theta - &y).amax();
    (theta.iter().copied().collect(), residual)
}

/// `(P^π f)_h(s,a) = r_h(s,a) + Σ_{s'} P_h(s'|s,a) Σ_{a'} π_{h+1}(a'|s') f_{h+1}(s',a')`
/// from a Q table indexed `[step][pair]`.
fn backup(core: &TabularCore, f: &[Vec<f64>], pi: &TabularPolicy, h: usize) -> Vec<f64> {
    let na = core.num_actions();
    let mut out = Vec::with_capacity(core.num_pairs());
    for s in 0..core.num_states() {
        for a in 0..na {
            let mut y = core.reward(h, s, a);
            if let Some(next) = core.next_step(h) {
                let mut ev = 0.0;
                for (s2, &p) in core.transition_row(h, s, a).iter().enumerate() {
                    let row = &f[next][s2 * na..(s2 + 1) * na];
                    ev += p * pi.probs(next, s2).iter().zip(row).map(|(x, y)| x * y).sum::<f64>();
                }
                y += core.target_discount() * ev;
            }
            out.push(y);
        }
    }
    out
}

/// Largest amount by which a table breaks the class bounds at step `h`.
fn class_violation(bounds: &Bounds, h: usize, theta: &[f64], values: &[f64]) -> f64 {
    let sup = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (norm(theta) - bounds.q_norm[h]).max(sup - bounds.q_sup[h]).max(0.0)
}

fn q_star_table(core: &TabularCore, values: &Values) -> Vec<Vec<f64>> {
    (0..core.num_steps())
        .map(|h| (0..core.num_states()).flat_map(|s| values.q_row(h, s).to_vec()).collect())
        .collect()
}

pub fn check_bellman_completeness(triples: usize, seed: u64) -> Result<CheckReport> {
    let mut rng = stream(seed, Purpose::Verify, 1);
    let (mut residual, mut violation) = (0.0f64, 0.0f64);
    for i in 0..triples {
        let ns = rng.random_range(2..=5);
        let na = rng.random_range(1..=3);
        let horizon = rng.random_range(2..=5);
        let core = make_instance(
            &InstanceKind::Random { num_states: ns, num_actions: na, mode: Mode::Episodic { horizon } },
            seed.wrapping_mul(1000).wrapping_add(i as u64),
        )?;
        let lin = LinearMdp::one_hot(core.clone());
        let bounds = Bounds::for_instance(&lin, 1.0);
        // Random f inside the sup bound; one-hot features make the norm bound follow.
        let f: Vec<Vec<f64>> = (0..horizon)
            .map(|h| {
                let cap = bounds.q_sup[h];
                (0..core.num_pairs()).map(|_| if i == 0 { 0.0 } else { rng.random_range(-cap..=cap) }).collect()
            })
            .collect();
        let pi = random_policy(&core, &mut rng);
        for h in 0..horizon {
            let target = backup(&core, &f, &pi, h);
            let (theta, r) = interpolate(&lin, h, &target);
            residual = residual.max(r);
            violation = violation.max(class_violation(&bounds, h, &theta, &target));
        }
    }
    // Realizability of Q* on one random instance and on chain_lock.
    let mut realizability = 0.0f64;
    let instances = [
        make_instance(&InstanceKind::Random { num_states: 5, num_actions: 3, mode: Mode::Episodic { horizon: 4 } }, seed)?,
        make_instance(&InstanceKind::ChainLock { horizon: 6, num_actions: 2 }, seed)?,
    ];
    for core in instances {
        let lin = LinearMdp::one_hot(core.clone());
        let bounds = Bounds::for_instance(&lin, 1.0);
        let q = q_star_table(&core, &optimal_values(&core).values);
        for (h, target) in q.iter().enumerate() {
            let (theta, r) = interpolate(&lin, h, target);
            let coord = theta.iter().zip(target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            realizability = realizability.max(r).max(coord).max(class_violation(&bounds, h, &theta, target));
        }
    }
    let max_error = residual.max(violation).max(realizability);
    Ok(CheckReport {
        name: "bellman_completeness",
        pass: residual <= 1e-8 && violation <= MEMBERSHIP_SLACK && realizability <= 1e-8,
        max_error,
        details: json!({
            "triples": triples,
            "maxResidual": residual,
            "maxClassViolation": violation,
            "realizabilityError": realizability,
        }),
    })
}

/// `V*_h(s) − Σ_a softmax(b·Q*_h(s,·))_a Q*_h(s,a)` for every step and state.
pub fn entropy_policy_gaps(core: &TabularCore, b: f64) -> Vec<f64> {
    let values = optimal_values(core).values;
    let mut gaps = Vec::new();
    for h in 0..core.num_steps() {
        for s in 0..core.num_states() {
            let row = values.q_row(h, s);
            let logits: Vec<f64> = row.iter().map(|q| b * q).collect();
            let v: f64 = softmax(&logits).iter().zip(row).map(|(p, q)| p * q).sum();
            gaps.push(values.v(h, s) - v);
        }
    }
    gaps
}

pub fn check_model_error_bound(instances: usize, b_grid: &[f64], seed: u64) -> Result<CheckReport> {
    let mut violation = 0.0f64;
    let mut worst_ratio = 0.0f64;
    let mut cores = Vec::new();
    for i in 0..instances {
        cores.push(make_instance(
            &InstanceKind::Random { num_states: 5, num_actions: 3, mode: Mode::Episodic { horizon: 4 } },
            seed.wrapping_mul(1000).wrapping_add(i as u64),
        )?);
    }
    for core in &cores {
        let bound_unit = (core.num_actions() as f64).ln();
        for &b in b_grid {
            for gap in entropy_policy_gaps(core, b) {
                violation = violation.max(-1e-10 - gap).max(gap - bound_unit / b);
                worst_ratio = worst_ratio.max(gap * b / bound_unit);
            }
        }
    }
    let single = make_instance(
        &InstanceKind::Random { num_states: 4, num_actions: 1, mode: Mode::Episodic { horizon: 3 } },
        seed,
    )?;
    let single_gap = b_grid
        .iter()
        .flat_map(|&b| entropy_policy_gaps(&single, b))
        .fold(0.0f64, |m, g| m.max(g.abs()));
    let fixture = make_instance(&InstanceKind::TwoState { mode: Mode::Episodic { horizon: 2 } }, 0)?;
    let limit_gap = entropy_policy_gaps(&fixture, 1e6).into_iter().fold(0.0f64, f64::max);
    let pass = violation <= 0.0 && single_gap == 0.0 && limit_gap <= 1e-4;
    Ok(CheckReport {
        name: "model_error_bound",
        pass,
        max_error: violation.max(0.0),
        details: json!({
            "instances": instances,
            "bGrid": b_grid,
            "worstGapOverBound": worst_ratio,
            "singleActionGap": single_gap,
            "twoStateGapAtLargeB": limit_gap,
        }),
    })
}

/// Both forms of the regularised Lagrangian at the population level.
///
/// `D_h` is the exact visitation of `behavior`; `f` is a Q table indexed
/// `[step][pair]` with greedy Bellman targets.
pub struct LagrangianValues {
    /// Closed-form inner infimum over `λ`: `E_ρ max f_0 − Σ_h E_{D_h}[res²]/(2β)`.
    pub dual: f64,
    /// Conditional-mean fit of `g` inside the squared-difference bracket.
    pub primal: f64,
    /// `Σ_h E_{D_h}[res²]/(2β)`, the regularisation magnitude.
    pub regularizer: f64,
}

pub fn lagrangian_values(core: &TabularCore, f: &[Vec<f64>], behavior: &TabularPolicy, beta: f64) -> Result<LagrangianValues> {
    let na = core.num_actions();
    let d = visitation(core, behavior)?;
    let head: f64 = core
        .rho()
        .iter()
        .enumerate()
        .map(|(s, p)| p * f[0][s * na..(s + 1) * na].iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .sum();
    let next_max = |h: usize, s2: usize| match core.next_step(h) {
        Some(n) => core.target_discount() * f[n][s2 * na..(s2 + 1) * na].iter().copied().fold(f64::NEG_INFINITY, f64::max),
        None => 0.0,
    };
    let (mut inf_term, mut bracket) = (0.0, 0.0);
    for h in 0..core.num_steps() {
        for s in 0..core.num_states() {
            for a in 0..na {
                let w = d.get(h, s, a);
                if w == 0.0 {
                    continue;
                }
                let fq = f[h][s * na + a];
                let r = core.reward(h, s, a);
                let row = core.transition_row(h, s, a);
                let mean_delta: f64 = row.iter().enumerate().map(|(s2, p)| p * (r + next_max(h, s2))).sum();
                // inf_λ λ(E[δ] − f) + (β/2)λ² = −(E[δ] − f)²/(2β)
                inf_term -= w * (mean_delta - fq).powi(2) / (2.0 * beta);
                let mut sq = 0.0;
                for (s2, p) in row.iter().enumerate() {
                    let delta = r + next_max(h, s2);
                    sq += p * ((delta - fq).powi(2) - (delta - mean_delta).powi(2));
                }
                bracket += w * sq;
            }
        }
    }
    Ok(LagrangianValues { dual: head + inf_term, primal: head - bracket / (2.0 * beta), regularizer: -inf_term })
}

pub fn check_lagrangian_equivalence(samples: usize, betas: &[f64], seed: u64) -> Result<CheckReport> {
    let mut rng = stream(seed, Purpose::Verify, 3);
    let core = make_instance(
        &InstanceKind::Random { num_states: 4, num_actions: 3, mode: Mode::Episodic { horizon: 3 } },
        seed,
    )?;
    let behavior = TabularPolicy::uniform(&core);
    let (mut discrepancy, mut halving) = (0.0f64, 0.0f64);
    for _ in 0..samples {
        let f: Vec<Vec<f64>> = (0..core.num_steps())
            .map(|h| {
                let cap = core.value_bound(h);
                (0..core.num_pairs()).map(|_| rng.random_range(-cap..=cap)).collect()
            })
            .collect();
        for &beta in betas {
            let one = lagrangian_values(&core, &f, &behavior, beta)?;
            discrepancy = discrepancy.max((one.dual - one.primal).abs());
            let two = lagrangian_values(&core, &f, &behavior, 2.0 * beta)?;
            if one.regularizer > 0.0 {
                halving = halving.max((two.regularizer / one.regularizer - 0.5).abs());
            }
        }
    }
    let opt = optimal_values(&core);
    let q = q_star_table(&core, &opt.values);
    let at_star = lagrangian_values(&core, &q, &behavior, 1.0)?;
    let star_error = (at_star.dual - opt.values.v_rho(core.rho()))
        .abs()
        .max((at_star.primal - opt.values.v_rho(core.rho())).abs())
        .max(at_star.regularizer.abs());
    let max_error = discrepancy.max(star_error);
    Ok(CheckReport {
        name: "lagrangian_equivalence",
        pass: discrepancy <= 1e-9 && halving <= 1e-12 && star_error <= 1e-9,
        max_error,
        details: json!({
            "samples": samples,
            "betas": betas,
            "maxDiscrepancy": discrepancy,
            "halvingError": halving,
            "optimalQError": star_error,
        }),
    })
}

/// Chi-square goodness of fit of sampler loop lengths to `Geometric(1 − γ)`
/// on support `{1, 2, …}`. Bins hold at least 5 expected counts; the last
/// bin takes the tail. Returns `(statistic, degrees of freedom, p-value)`.
pub fn geometric_fit(length_counts: &[u64], gamma: f64) -> (f64, usize, f64) {
    let n: u64 = length_counts.iter().sum();
    let n = n as f64;
    let mut stat = 0.0;
    let mut bins = 0;
    let mut observed_tail = n;
    let mut tail_prob = 1.0;
    let mut k = 0;
    loop {
        let p = (1.0 - gamma) * gamma.powi(k as i32);
        // Stop once the bin after this one would be under 5 expected counts.
        if n * (tail_prob - p) < 5.0 {
            break;
        }
        let observed = length_counts.get(k).copied().unwrap_or(0) as f64;
        stat += (observed - n * p).powi(2) / (n * p);
        observed_tail -= observed;
        tail_prob -= p;
        bins += 1;
        k += 1;
    }
    stat += (observed_tail - n * tail_prob).powi(2) / (n * tail_prob);
    bins += 1;
    let dof = bins - 1;
    let p_value = if dof == 0 { 1.0 } else { ChiSquared::new(dof as f64).expect("dof > 0").sf(stat) };
    (stat, dof, p_value)
}

pub fn check_sampler_distribution(draws: usize, gamma: f64, seed: u64, exec: Exec) -> Result<CheckReport> {
    let core = make_instance(
        &InstanceKind::Random { num_states: 4, num_actions: 2, mode: Mode::Discounted { gamma } },
        seed,
    )?;
    let pi = TabularPolicy::uniform(&core);
    let exact = visitation(&core, &pi)?;
    let stats = sampler_stats(&core, &pi, draws, seed, exec)?;
    let tv = total_variation(&stats.pair_freq, exact.step(0));
    let expected_len = 1.0 / (1.0 - gamma);
    let len_error = (stats.mean_draws - expected_len).abs() / expected_len;
    let (chi2, dof, p_value) = geometric_fit(&stats.length_counts, gamma);
    Ok(CheckReport {
        name: "sampler_distribution",
        pass: tv <= 0.02 && len_error <= 0.02 && p_value >= 0.001,
        max_error: tv,
        details: json!({
            "draws": draws,
            "gamma": gamma,
            "totalVariation": tv,
            "meanLength": stats.mean_draws,
            "meanLengthRelError": len_error,
            "chiSquare": chi2,
            "degreesOfFreedom": dof,
            "pValue": p_value,
        }),
    })
}

/// Parameters of [`run_all`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    pub orientation: Orientation,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { seed: 0, orientation: Orientation::Correct }
    }
}

/// Runs the five checks with their default parameters. Checks that error
/// out are reported as failures with the message in `details`.
pub fn run_all(opts: VerifyOptions, exec: Exec) -> Vec<CheckReport> {
    let seed = opts.seed;
    exec.map_range(5, |i| {
        let (name, out) = match i {
            0 => ("reparam_identity", Ok(check_reparam_identity(10_000, seed, opts.orientation))),
            1 => ("bellman_completeness", check_bellman_completeness(50, seed)),
            2 => ("model_error_bound", check_model_error_bound(10, &[1.0, 10.0, 100.0], seed)),
            3 => ("lagrangian_equivalence", check_lagrangian_equivalence(100, &[0.5, 1.0, 2.0], seed)),
            _ => ("sampler_distribution", check_sampler_distribution(200_000, 0.9, seed, Exec::Sequential)),
        };
        out.unwrap_or_else(|e| CheckReport {
            name,
            pass: false,
            max_error: f64::INFINITY,
            details: json!({ "error": e.to_string() }),
        })
    })
}

/// `{check → {pass, maxError, details}}`. Non-finite errors serialise as
/// `null`.
pub fn report_json(reports: &[CheckReport]) -> Value {
    let map: BTreeMap<&str, &CheckReport> = reports.iter().map(|r| (r.name, r)).collect();
    serde_json::to_value(map).expect("reports serialise")
}
