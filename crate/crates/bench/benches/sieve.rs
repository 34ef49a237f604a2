use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use dsieve_core::distributed::build_comparator_schedule;
use dsieve_core::rng;
use dsieve_core::sieve::{recover_shift, run_sieve, sample_label, Mode};
use dsieve_core::instances::generate_instance;
use dsieve_core::Backend;
use rand::Rng;

fn bench_schedule(c: &mut Criterion) {
    let mut group = c.benchmark_group("batcher");
    for t in [2u32, 4, 6] {
        let count = 1usize << t;
        group.bench_with_input(BenchmarkId::new("build", count), &count, |b, &count| {
            b.iter(|| build_comparator_schedule(black_box(count), 8).unwrap());
        });
        let schedule = build_comparator_schedule(count, 8).unwrap();
        let mut r = rng::master(1);
        let vals: Vec<u64> = (0..count).map(|_| r.random_range(0..256)).collect();
        group.bench_with_input(BenchmarkId::new("apply", count), &vals, |b, vals| {
            b.iter(|| {
                let mut v = vals.clone();
                schedule.apply(black_box(&mut v));
                v
            });
        });
    }
    group.finish();
}

fn bench_analytic_sieve(c: &mut Criterion) {
    let mut group = c.benchmark_group("sieve-analytic");
    group.sample_size(20);
    for k in [8u32, 12, 16] {
        let modulus = 1u64 << k;
        group.bench_with_input(BenchmarkId::from_parameter(k), &modulus, |b, &modulus| {
            let mut trial = 0u64;
            b.iter(|| {
                trial += 1;
                let mut r = rng::stream(7, &[trial]);
                run_sieve(
                    |rng| Ok(sample_label(modulus, rng)),
                    modulus,
                    u64::MAX,
                    true,
                    &mut r,
                )
                .unwrap()
                .1
                .fresh_drawn
            });
        });
    }
    group.finish();
}

fn bench_end_to_end_analytic(c: &mut Criterion) {
    let mut group = c.benchmark_group("recover-analytic");
    group.sample_size(10);
    let inst = {
        let mut r = rng::master(3);
        generate_instance(12, 14, 1234, &mut r).unwrap()
    };
    for t in [2u32, 4] {
        group.bench_with_input(BenchmarkId::new("distributed", t), &t, |b, &t| {
            let mut seed = 0u64;
            b.iter(|| {
                seed += 1;
                recover_shift(&inst, Mode::Distributed { t }, Backend::Analytic, None, seed)
                    .unwrap()
                    .a
            });
        });
    }
    group.finish();
}

criterion_group!(benches, bench_schedule, bench_analytic_sieve, bench_end_to_end_analytic);
criterion_main!(benches);
