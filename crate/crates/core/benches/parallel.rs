use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use vac_core::estimate::{policy_value, sampler_stats};
use vac_core::mdp::{make_instance, InstanceKind, Mode, TabularPolicy};
use vac_core::verify::{run_all, VerifyOptions};
use vac_core::Exec;

fn estimators(c: &mut Criterion) {
    let episodic =
        make_instance(&InstanceKind::Random { num_states: 5, num_actions: 3, mode: Mode::Episodic { horizon: 4 } }, 7)
            .unwrap();
    let discounted =
        make_instance(&InstanceKind::Random { num_states: 4, num_actions: 2, mode: Mode::Discounted { gamma: 0.9 } }, 3)
            .unwrap();
    let mut group = c.benchmark_group("estimators");
    group.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        let name = format!("{exec:?}");
        let pi = TabularPolicy::uniform(&episodic);
        group.bench_with_input(BenchmarkId::new("policy_value_1e5", &name), &exec, |b, &exec| {
            b.iter(|| policy_value(black_box(&episodic), &pi, 100_000, 1, exec).unwrap())
        });
        let pi = TabularPolicy::uniform(&discounted);
        group.bench_with_input(BenchmarkId::new("sampler_2e5", &name), &exec, |b, &exec| {
            b.iter(|| sampler_stats(black_box(&discounted), &pi, 200_000, 1, exec).unwrap())
        });
    }
    group.finish();
}

fn verification(c: &mut Criterion) {
    let mut group = c.benchmark_group("verify");
    group.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        group.bench_with_input(BenchmarkId::new("run_all", format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| run_all(VerifyOptions::default(), exec))
        });
    }
    group.finish();
}

criterion_group!(benches, estimators, verification);
criterion_main!(benches);
