//! Sequential vs rayon execution of a small XXZ sweep.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gedmrg::exec::Executor;
use gedmrg::pipeline::{run_sweep, Method, RunConfig};

fn sweep_config() -> RunConfig {
    RunConfig {
        n: 8,
        ns: 2,
        chi_s: 16,
        chi_2: 16,
        delta: vec![-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 3.0],
        methods: vec![Method::Edge, Method::Gdmrg],
        ..Default::default()
    }
}

fn bench_sweep(c: &mut Criterion) {
    let cfg = sweep_config();
    let jobs = std::thread::available_parallelism()
        .map_or(2, |n| n.get())
        .max(2);
    let mut group = c.benchmark_group("xxz_sweep");
    group.sample_size(10);
    for exec in [Executor::Sequential, Executor::with_jobs(jobs)] {
        let name = match exec {
            Executor::Sequential => "sequential",
            Executor::Parallel { .. } => "parallel",
        };
        group.bench_with_input(BenchmarkId::new(name, exec.jobs()), &exec, |b, &exec| {
            b.iter(|| run_sweep(&cfg, exec).expect("valid sweep"))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_sweep);
criterion_main!(benches);
