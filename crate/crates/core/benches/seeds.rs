//! Multi-seed throughput: rayon fan-out against the sequential loop.

use std::hint::black_box;

use blindsim::config::Config;
use blindsim::harness::{run_seeds, run_seeds_sequential};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn config() -> Config {
    let src = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../scenarios/blinding-iid.toml"
    ))
    .unwrap();
    let mut cfg = Config::from_toml_str(&src).unwrap();
    cfg.slot_count = 10_000;
    cfg
}

fn seeds(c: &mut Criterion) {
    let cfg = config();
    let mut group = c.benchmark_group("run_seeds");
    group.sample_size(10);
    for n in [1u64, 8] {
        let seeds: Vec<u64> = (0..n).collect();
        group.bench_with_input(BenchmarkId::new("parallel", n), &seeds, |b, s| {
            b.iter(|| run_seeds(black_box(&cfg), s))
        });
        group.bench_with_input(BenchmarkId::new("sequential", n), &seeds, |b, s| {
            b.iter(|| run_seeds_sequential(black_box(&cfg), s))
        });
    }
    group.finish();
}

criterion_group!(benches, seeds);
criterion_main!(benches);
