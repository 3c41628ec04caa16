mod common;

use std::path::PathBuf;

use proptest::prelude::*;
use rand::Rng;

use vac_core::estimate::{policy_value, rollout_visitation, sampler_stats, total_variation};
use vac_core::mdp::{
    make_instance, optimal_values, policy_values, visitation, InstanceKind, LinearMdp, Mode, TabularCore, TabularPolicy,
};
use vac_core::Exec;

fn fixture(name: &str) -> TabularCore {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name);
    TabularCore::load(path).unwrap()
}

fn random_tabular(core: &TabularCore, r: &mut impl Rng) -> TabularPolicy {
    TabularPolicy::from_fn(core, |_, _| {
        let raw: Vec<f64> = (0..core.num_actions()).map(|_| r.random::<f64>() + 1e-3).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|x| x / total).collect()
    })
    .unwrap()
}

fn random_5x3() -> TabularCore {
    make_instance(&InstanceKind::Random { num_states: 5, num_actions: 3, mode: Mode::Episodic { horizon: 4 } }, 7).unwrap()
}

#[test]
fn golden_fixtures_match_generators_and_values() {
    let cases = [
        ("two_state_episodic.json", InstanceKind::TwoState { mode: Mode::Episodic { horizon: 2 } }, 0, 1.5),
        ("two_state_discounted.json", InstanceKind::TwoState { mode: Mode::Discounted { gamma: 0.9 } }, 0, 9.5),
        ("chain_lock_h6.json", InstanceKind::ChainLock { horizon: 6, num_actions: 2 }, 0, 1.0),
        (
            "random_5x3_h4_seed7.json",
            InstanceKind::Random { num_states: 5, num_actions: 3, mode: Mode::Episodic { horizon: 4 } },
            7,
            3.1864637390645614,
        ),
    ];
    for (name, kind, seed, v_star) in cases {
        let core = fixture(name);
        assert_eq!(core, make_instance(&kind, seed).unwrap(), "{name}");
        let got = optimal_values(&core).values.v_rho(core.rho());
        assert!((got - v_star).abs() <= 1e-9, "{name}: {got} vs {v_star}");
    }
}

#[test]
fn optimal_value_dominates_random_policies() {
    let core = random_5x3();
    let opt = optimal_values(&core).values;
    let mut r = common::rng(11);
    for _ in 0..100 {
        let v = policy_values(&core, &random_tabular(&core, &mut r)).unwrap();
        for h in 0..core.num_steps() {
            for s in 0..core.num_states() {
                assert!(opt.v(h, s) >= v.v(h, s) - 1e-12);
            }
        }
    }
}

#[test]
fn monte_carlo_returns_agree_with_exact_values() {
    let episodic = random_5x3();
    let discounted =
        make_instance(&InstanceKind::Random { num_states: 4, num_actions: 2, mode: Mode::Discounted { gamma: 0.7 } }, 3)
            .unwrap();
    let mut r = common::rng(5);
    for core in [episodic, discounted] {
        let pi = random_tabular(&core, &mut r);
        let exact = policy_values(&core, &pi).unwrap().v_rho(core.rho());
        let est = policy_value(&core, &pi, 100_000, 9, Exec::Parallel).unwrap();
        assert!((est.mean - exact).abs() <= 3.0 * est.std_err, "{} vs {exact} (se {})", est.mean, est.std_err);
    }
}

#[test]
fn rollout_frequencies_match_visitation() {
    let core = random_5x3();
    let pi = random_tabular(&core, &mut common::rng(6));
    let exact = visitation(&core, &pi).unwrap();
    let freq = rollout_visitation(&core, &pi, 100_000, 2, Exec::Parallel).unwrap();
    let np = core.num_pairs();
    for h in 0..core.num_steps() {
        let tv = total_variation(&freq[h * np..(h + 1) * np], exact.step(h));
        assert!(tv <= 0.02, "step {h}: tv {tv}");
    }
}

#[test]
fn zero_discount_sampler_follows_initial_law() {
    let core =
        make_instance(&InstanceKind::Random { num_states: 4, num_actions: 3, mode: Mode::Discounted { gamma: 0.0 } }, 8)
            .unwrap();
    let pi = random_tabular(&core, &mut common::rng(7));
    let stats = sampler_stats(&core, &pi, 100_000, 4, Exec::Parallel).unwrap();
    let expected: Vec<f64> = (0..core.num_states())
        .flat_map(|s| pi.probs(0, s).iter().map(|p| p * core.rho()[s]).collect::<Vec<_>>())
        .collect();
    assert!(total_variation(&stats.pair_freq, &expected) <= 0.01);
    assert_eq!(stats.mean_draws, 1.0);
}

#[test]
fn sampler_matches_discounted_occupancy() {
    let core =
        make_instance(&InstanceKind::Random { num_states: 3, num_actions: 2, mode: Mode::Discounted { gamma: 0.9 } }, 4)
            .unwrap();
    let pi = random_tabular(&core, &mut common::rng(8));
    let stats = sampler_stats(&core, &pi, 100_000, 5, Exec::Parallel).unwrap();
    let exact = visitation(&core, &pi).unwrap();
    assert!(total_variation(&stats.pair_freq, exact.step(0)) <= 0.02);
    assert!((stats.mean_draws / 10.0 - 1.0).abs() <= 0.02, "mean draws {}", stats.mean_draws);
}

#[test]
fn one_hot_embedding_reproduces_transitions() {
    for core in [random_5x3(), fixture("chain_lock_h6.json")] {
        let err = LinearMdp::one_hot(core).realization_error();
        assert!(err.reward <= 1e-15 && err.transition <= 1e-15, "{err:?}");
    }
    assert_eq!(LinearMdp::one_hot(fixture("chain_lock_h6.json")).dim(), 14);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn policy_values_stay_in_range(seed in 0u64..10_000, ns in 1usize..5, na in 1usize..4, horizon in 1usize..5) {
        let core =
            make_instance(&InstanceKind::Random { num_states: ns, num_actions: na, mode: Mode::Episodic { horizon } }, seed)
                .unwrap();
        let pi = random_tabular(&core, &mut common::rng(seed));
        let v = policy_values(&core, &pi).unwrap();
        for h in 0..horizon {
            for s in 0..ns {
                prop_assert!(v.v(h, s) >= 0.0 && v.v(h, s) <= (horizon - h) as f64 + 1e-12);
            }
        }
    }

    #[test]
    fn discounted_values_stay_in_range(seed in 0u64..10_000, gamma in 0.0f64..0.95) {
        let core =
            make_instance(&InstanceKind::Random { num_states: 3, num_actions: 2, mode: Mode::Discounted { gamma } }, seed)
                .unwrap();
        let pi = random_tabular(&core, &mut common::rng(seed));
        let v = policy_values(&core, &pi).unwrap();
        for s in 0..3 {
            prop_assert!(v.v(0, s) >= -1e-12 && v.v(0, s) <= 1.0 / (1.0 - gamma) + 1e-9);
        }
    }
}
