mod common;

use common::*;
use rand::Rng;
use vac_core::approx::{policy_in_class, project_policy, project_q, q_in_class, Bounds, LogLinearPolicy, QFunction};
use vac_core::mdp::{make_instance, InstanceKind, LinearMdp, Mode, TabularPolicy};
use vac_core::objective::{Problem, TransitionDataset};
use vac_core::solver::{solve_round, Phase, SolveConfig, Target};

fn two_state() -> LinearMdp {
    LinearMdp::one_hot(make_instance(&InstanceKind::TwoState { mode: Mode::Episodic { horizon: 2 } }, 0).unwrap())
}

fn start(lin: &LinearMdp) -> (QFunction, LogLinearPolicy) {
    (QFunction::zeros(lin), LogLinearPolicy::zeros(lin))
}

#[test]
fn value_only_ascent_trace_is_non_decreasing() {
    let lin = random_lin(1, 3, 3, Mode::Episodic { horizon: 3 });
    let data = TransitionDataset::new(3);
    let problem = Problem::new(&lin, &data, 0.0).unwrap();
    let bounds = Bounds::for_instance(&lin, 1.0);
    let cfg = SolveConfig { outer_rounds: 1, ..SolveConfig::default() };
    let (q, p) = start(&lin);
    let out = solve_round(&problem, &bounds, (&q, &p), &cfg, Target::Vac).unwrap();
    assert_eq!(out.trace[0].phase, Phase::Start);
    for w in out.trace.windows(2) {
        assert!(w[1].objective >= w[0].objective, "{:?}", w);
    }
    assert!(out.objective > out.trace[0].objective);
}

#[test]
fn iterates_stay_in_class_and_runs_are_deterministic() {
    for (seed, mode) in [(2, Mode::Episodic { horizon: 3 }), (3, Mode::Discounted { gamma: 0.7 })] {
        let lin = random_lin(seed, 3, 2, mode);
        let data = random_dataset(&lin, &TabularPolicy::uniform(lin.core()), 30, seed);
        let problem = Problem::new(&lin, &data, 0.3).unwrap();
        let bounds = Bounds::for_instance(&lin, 0.5);
        let cfg = SolveConfig { step_theta: 5.0, step_omega: 20.0, ..SolveConfig::default() };
        let (q, p) = start(&lin);
        let a = solve_round(&problem, &bounds, (&q, &p), &cfg, Target::Vac).unwrap();
        let b = solve_round(&problem, &bounds, (&q, &p), &cfg, Target::Vac).unwrap();
        assert!(q_in_class(&a.q, &lin, &bounds));
        assert!(policy_in_class(&a.policy, &bounds));
        assert_eq!(a.q, b.q);
        assert_eq!(a.policy, b.policy);
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
        let best = a.trace.iter().map(|r| r.objective).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(best, a.objective);
    }
}

#[test]
fn warm_start_from_optimum_does_not_decrease() {
    let lin = two_state();
    let data = random_dataset(&lin, &TabularPolicy::uniform(lin.core()), 50, 4);
    let problem = Problem::new(&lin, &data, 0.1).unwrap();
    let bounds = Bounds::for_instance(&lin, 1.0);
    let cfg = SolveConfig::default();
    let (q, p) = start(&lin);
    let first = solve_round(&problem, &bounds, (&q, &p), &cfg, Target::Vac).unwrap();
    let again = solve_round(&problem, &bounds, (&first.q, &first.policy), &cfg, Target::Vac).unwrap();
    assert!(again.objective >= first.objective);
    assert_eq!(again.trace[0].objective, first.objective);
}

#[test]
fn mex_target_keeps_policy_fixed() {
    let lin = random_lin(5, 3, 2, Mode::Episodic { horizon: 2 });
    let data = random_dataset(&lin, &TabularPolicy::uniform(lin.core()), 20, 5);
    let problem = Problem::new(&lin, &data, 0.5).unwrap();
    let bounds = Bounds::for_instance(&lin, 1.0);
    let (q, p) = start(&lin);
    let out = solve_round(&problem, &bounds, (&q, &p), &SolveConfig::default(), Target::Mex).unwrap();
    assert!(out.trace.iter().all(|r| r.phase != Phase::Actor));
    assert_eq!(out.policy, p);
    assert!((problem.mex_objective(&out.q).unwrap() - out.objective).abs() < 1e-12);
}

/// Compass search over all of (θ, ω) with projection after every move,
/// shrinking the mesh when no coordinate move improves. Independent of the
/// gradient.
fn pattern_search(problem: &Problem<'_>, bounds: &Bounds, q: QFunction, p: LogLinearPolicy) -> f64 {
    let lin = problem.lin();
    let eval = |q: &QFunction, p: &LogLinearPolicy| problem.objective(q, p).unwrap().value;
    let (mut q, mut p) = (project_q(&q, lin, bounds), project_policy(&p, bounds));
    let mut best = eval(&q, &p);
    let mut mesh = 1.0;
    while mesh > 1e-7 {
        let mut improved = false;
        for h in 0..lin.num_steps() {
            for k in 0..lin.dim() {
                for dir in [mesh, -mesh] {
                    let mut tq = q.clone();
                    tq.theta.step_mut(h)[k] += dir;
                    let tq = project_q(&tq, lin, bounds);
                    let v = eval(&tq, &p);
                    if v > best + 1e-15 {
                        best = v;
                        q = tq;
                        improved = true;
                    }
                    let mut tp = p.clone();
                    tp.omega.step_mut(h)[k] += 4.0 * dir;
                    let tp = project_policy(&tp, bounds);
                    let v = eval(&q, &tp);
                    if v > best + 1e-15 {
                        best = v;
                        p = tp;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            mesh *= 0.5;
        }
    }
    best
}

#[test]
fn default_solver_reaches_search_optimum_on_two_state() {
    let lin = two_state();
    let data = random_dataset(&lin, &TabularPolicy::uniform(lin.core()), 50, 0);
    let problem = Problem::new(&lin, &data, 0.1).unwrap();
    let bounds = Bounds::for_instance(&lin, 1.0);
    let (q, p) = start(&lin);
    let out = solve_round(&problem, &bounds, (&q, &p), &SolveConfig::default(), Target::Vac).unwrap();

    let mut r = rng(0);
    let mut oracle = pattern_search(&problem, &bounds, q.clone(), p.clone());
    for _ in 0..4 {
        let q0 = random_q(&lin, 0.8, &mut r);
        let p0 = random_policy(&lin, r.random_range(0.5..4.0), &mut r);
        oracle = oracle.max(pattern_search(&problem, &bounds, q0, p0));
    }
    assert!((out.objective - oracle).abs() <= 1e-3, "solver {} vs search {oracle}", out.objective);
}
