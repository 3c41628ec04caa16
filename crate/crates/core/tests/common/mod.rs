#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vac_core::approx::{project_policy, project_q, Bounds, LogLinearPolicy, QFunction, StepWeights};
use vac_core::mdp::{
    make_instance, rollout, sample_discounted, InstanceKind, LinearMdp, Mode, TabularPolicy,
};
use vac_core::objective::TransitionDataset;
use vac_core::rng::{stream, Purpose};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_lin(seed: u64, ns: usize, na: usize, mode: Mode) -> LinearMdp {
    LinearMdp::one_hot(make_instance(&InstanceKind::Random { num_states: ns, num_actions: na, mode }, seed).unwrap())
}

pub fn random_dataset(lin: &LinearMdp, policy: &TabularPolicy, episodes: usize, seed: u64) -> TransitionDataset {
    let core = lin.core();
    let mut data = TransitionDataset::new(core.num_steps());
    for t in 0..episodes {
        let mut r = stream(seed, Purpose::Episode, t as u64);
        if core.is_discounted() {
            data.push_sample(&sample_discounted(core, policy, &mut r).unwrap(), t).unwrap();
        } else {
            data.push_trajectory(&rollout(core, policy, &mut r).unwrap(), t).unwrap();
        }
    }
    data
}

pub fn random_weights(lin: &LinearMdp, scale: f64, r: &mut impl Rng) -> StepWeights {
    StepWeights::from_steps(
        (0..lin.num_steps()).map(|_| (0..lin.dim()).map(|_| scale * (2.0 * r.random::<f64>() - 1.0)).collect()).collect(),
    )
}

/// Random Q-function scaled to a fraction of each step's sup bound.
pub fn random_q(lin: &LinearMdp, fraction: f64, r: &mut impl Rng) -> QFunction {
    let bounds = Bounds::for_instance(lin, 1.0);
    let mut theta = random_weights(lin, 1.0, r);
    for h in 0..lin.num_steps() {
        let s = bounds.q_sup[h] * fraction;
        theta.step_mut(h).iter_mut().for_each(|x| *x *= s);
    }
    project_q(&QFunction { theta }, lin, &bounds)
}

pub fn random_policy(lin: &LinearMdp, scale: f64, r: &mut impl Rng) -> LogLinearPolicy {
    project_policy(&LogLinearPolicy { omega: random_weights(lin, scale, r) }, &Bounds::for_instance(lin, 1.0))
}

pub fn naive_q(lin: &LinearMdp, f: &QFunction, h: usize, s: usize, a: usize) -> f64 {
    if h >= lin.num_steps() {
        return 0.0;
    }
    let mut acc = 0.0;
    for k in 0..lin.dim() {
        acc += lin.feature(h, s, a)[k] * f.theta.step(h)[k];
    }
    acc
}

/// The step whose f feeds the target of step h, plus its multiplier.
pub fn next_of(lin: &LinearMdp, h: usize) -> (Option<usize>, f64) {
    match lin.core().gamma() {
        Some(g) => (Some(0), g),
        None => ((h + 1 < lin.num_steps()).then_some(h + 1), 1.0),
    }
}

/// Targets y(a') for one tuple, with their probabilities.
pub fn targets(lin: &LinearMdp, f: &QFunction, pi: &TabularPolicy, h: usize, reward: f64, s2: usize) -> Vec<(f64, f64)> {
    let (next, kappa) = next_of(lin, h);
    match next {
        None => vec![(1.0, reward)],
        Some(n) => (0..lin.core().num_actions())
            .map(|a2| (pi.probs(n, s2)[a2], reward + kappa * naive_q(lin, f, n, s2, a2)))
            .collect(),
    }
}

/// Σ_ξ E_{a'}(y − c(s,a))² with `c` supplied per (s, a).
pub fn residual_sum(
    lin: &LinearMdp,
    f: &QFunction,
    pi: &TabularPolicy,
    data: &TransitionDataset,
    h: usize,
    c: impl Fn(usize, usize) -> f64,
) -> f64 {
    let mut total = 0.0;
    for t in data.tuples(h) {
        for (p, y) in targets(lin, f, pi, h, t.reward, t.next_state) {
            let e = y - c(t.state, t.action);
            total += p * e * e;
        }
    }
    total
}

/// Inner minimiser in feature space: (Σφφᵀ + ridge·I) g = Σ φ ȳ, solved with
/// a dense LU on the d × d normal equations.
pub fn normal_equation_g(
    lin: &LinearMdp,
    f: &QFunction,
    pi: &TabularPolicy,
    data: &TransitionDataset,
    h: usize,
    ridge: f64,
) -> Vec<f64> {
    let d = lin.dim();
    let mut gram = DMatrix::<f64>::identity(d, d) * ridge;
    let mut rhs = nalgebra::DVector::<f64>::zeros(d);
    for t in data.tuples(h) {
        let phi = lin.feature(h, t.state, t.action);
        let ybar: f64 = targets(lin, f, pi, h, t.reward, t.next_state).iter().map(|(p, y)| p * y).sum();
        for i in 0..d {
            rhs[i] += phi[i] * ybar;
            for j in 0..d {
                gram[(i, j)] += phi[i] * phi[j];
            }
        }
    }
    gram.lu().solve(&rhs).unwrap().iter().copied().collect()
}

/// Loss computed tuple by tuple with the inner minimum from the dense normal
/// equations (assumes the minimiser is inside the Q ball).
pub fn naive_loss(lin: &LinearMdp, f: &QFunction, pi: &TabularPolicy, data: &TransitionDataset, ridge: f64) -> f64 {
    let mut total = 0.0;
    for h in 0..lin.num_steps() {
        if data.len(h) == 0 {
            continue;
        }
        let g = normal_equation_g(lin, f, pi, data, h, ridge);
        let first = residual_sum(lin, f, pi, data, h, |s, a| naive_q(lin, f, h, s, a));
        let inner = residual_sum(lin, f, pi, data, h, |s, a| {
            lin.feature(h, s, a).iter().zip(&g).map(|(x, y)| x * y).sum()
        });
        total += first - inner;
    }
    total
}

pub fn naive_value(lin: &LinearMdp, f: &QFunction, pi: &TabularPolicy) -> f64 {
    let core = lin.core();
    let mut v = 0.0;
    for s in 0..core.num_states() {
        for a in 0..core.num_actions() {
            v += core.rho()[s] * pi.probs(0, s)[a] * naive_q(lin, f, 0, s, a);
        }
    }
    v * core.gamma().map_or(1.0, |g| 1.0 - g)
}

/// Same linear MDP expressed in rotated features `φ' = Rφ` for a random
/// orthogonal `R`; norms and the realised instance are unchanged.
pub fn rotated(lin: &LinearMdp, seed: u64) -> (LinearMdp, DMatrix<f64>) {
    let d = lin.dim();
    let mut r = rng(seed);
    let raw = DMatrix::from_fn(d, d, |_, _| r.random::<f64>() - 0.5);
    let rot = raw.qr().q();
    let core = lin.core().clone();
    let apply = |v: &[f64]| -> Vec<f64> { (&rot * nalgebra::DVector::from_column_slice(v)).iter().copied().collect() };
    let mut features = Vec::new();
    let mut zeta = Vec::new();
    let mut mu = Vec::new();
    for h in 0..lin.num_steps() {
        for chunk in lin.step_features(h).chunks(d) {
            features.extend(apply(chunk));
        }
        zeta.extend(apply(lin.zeta(h)));
        for s2 in 0..core.num_states() {
            mu.extend(apply(lin.mu(h, s2)));
        }
    }
    (LinearMdp::new(core, d, features, zeta, mu).unwrap(), rot)
}
