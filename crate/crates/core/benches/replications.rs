//! Sequential versus data-parallel replication loops on a small power study.

use criterion::{criterion_group, criterion_main, Criterion};
use mnar_core::exec::Execution;
use mnar_core::presets;
use mnar_core::sim::{run_power_mse, ExperimentConfig, Scheme};

fn config() -> ExperimentConfig {
    let mut c = ExperimentConfig::new(presets::example1(), vec![0.2, 0.5], 64, 1000);
    c.schemes = vec![Scheme::Random, Scheme::TopK];
    c.seed = 9;
    c
}

fn replications(c: &mut Criterion) {
    let cfg = config();
    let mut group = c.benchmark_group("power_study_64_reps");
    group.sample_size(10);
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        group.bench_function(name, |b| b.iter(|| run_power_mse(&cfg, exec).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, replications);
criterion_main!(benches);
