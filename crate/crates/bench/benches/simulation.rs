use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ctxsim_bench::{agents, cluster, single_instance};
use ctxsim_core::{generate_workload, select_frequency_level, simulate, WorkloadSource};

fn frequency_selection(c: &mut Criterion) {
    c.bench_function("select_frequency_level/10k", |b| {
        b.iter(|| {
            let mut acc = 0;
            for u in (0..2_800_000u64).step_by(280) {
                acc += select_frequency_level(black_box(u), 2_800_000, 7, 0.75).0;
            }
            acc
        })
    });
}

fn workload(c: &mut Criterion) {
    let config = single_instance(3_600.0);
    let WorkloadSource::Generate(spec) = &config.workload else {
        unreachable!("bench scenarios generate their workload")
    };
    c.bench_function("generate_workload/1h", |b| b.iter(|| generate_workload(black_box(spec)).unwrap()));
}

fn simulation(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate");
    group.sample_size(10);
    for duration in [900.0, 3_600.0] {
        let config = single_instance(duration);
        let traces = agents(&config);
        group.bench_with_input(BenchmarkId::new("single_instance", duration), &traces, |b, t| {
            b.iter(|| simulate(&config, t).unwrap())
        });
    }
    for instances in [2, 4] {
        let config = cluster(instances, 0.16 * instances as f64, 1_800.0);
        let traces = agents(&config);
        group.bench_with_input(BenchmarkId::new("cluster", instances), &traces, |b, t| {
            b.iter(|| simulate(&config, t).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, frequency_selection, workload, simulation);
criterion_main!(benches);
