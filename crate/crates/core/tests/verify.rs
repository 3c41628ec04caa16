use vac_core::mdp::{make_instance, InstanceKind, Mode};
use vac_core::verify::{
    check_model_error_bound, check_reparam_identity, check_sampler_distribution, entropy_policy_gaps, report_json,
    run_all, Orientation, VerifyOptions,
};
use vac_core::Exec;

#[test]
fn default_suite_passes_and_is_deterministic() {
    let a = run_all(VerifyOptions::default(), Exec::Parallel);
    assert_eq!(a.len(), 5);
    for r in &a {
        assert!(r.pass, "{}: {}", r.name, r.details);
    }
    assert_eq!(a, run_all(VerifyOptions::default(), Exec::Sequential));
    let json = report_json(&a);
    for name in ["reparam_identity", "bellman_completeness", "model_error_bound", "lagrangian_equivalence", "sampler_distribution"] {
        assert_eq!(json[name]["pass"], true);
        assert!(json[name]["maxError"].is_number());
    }
}

#[test]
fn other_seeds_pass_too() {
    for seed in [1, 17] {
        for r in run_all(VerifyOptions { seed, ..Default::default() }, Exec::Parallel) {
            assert!(r.pass, "seed {seed} {}: {}", r.name, r.details);
        }
    }
}

#[test]
fn swapped_orientation_is_caught() {
    let r = check_reparam_identity(100, 0, Orientation::Swapped);
    assert!(!r.pass);
    assert_eq!(r.details["fixtureRhs"], -0.5);
    let all = run_all(VerifyOptions { seed: 0, orientation: Orientation::Swapped }, Exec::Parallel);
    assert_eq!(all.iter().filter(|r| !r.pass).map(|r| r.name).collect::<Vec<_>>(), ["reparam_identity"]);
}

#[test]
fn entropy_policy_gap_shrinks_like_one_over_b() {
    let core =
        make_instance(&InstanceKind::Random { num_states: 5, num_actions: 3, mode: Mode::Episodic { horizon: 4 } }, 7)
            .unwrap();
    for b in [1.0, 10.0, 100.0] {
        for gap in entropy_policy_gaps(&core, b) {
            assert!(gap >= -1e-10 && gap <= 3f64.ln() / b);
        }
    }
    assert!(check_model_error_bound(3, &[0.5, 5.0], 2).unwrap().pass);
}

#[test]
fn zero_discount_sampler_check_is_tight() {
    let r = check_sampler_distribution(100_000, 0.0, 3, Exec::Parallel).unwrap();
    assert!(r.pass && r.max_error <= 0.01, "{}", r.details);
    assert_eq!(r.details["meanLength"], 1.0);
}
