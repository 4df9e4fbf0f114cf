use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nestwalk::par::{map_seeds, map_seeds_sequential};
use nestwalk::three_distinctness::{generate, solve, GeneratorSpec, SolveConfig};
use nestwalk::walk::Mode;
use std::hint::black_box;

fn trial(seed: u64) -> bool {
    let inst = generate(GeneratorSpec::planted(24), seed);
    solve(&inst.values, seed, &SolveConfig::with_mode(Mode::Abstract)).is_ok_and(|r| r.triple.is_some())
}

fn solve_batch(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_batch_n24");
    group.sample_size(10);
    for seeds in [8u64, 32] {
        group.bench_with_input(BenchmarkId::new("sequential", seeds), &seeds, |b, &k| b.iter(|| black_box(map_seeds_sequential(0..k, trial))));
        // identical to the sequential path when built without the `parallel` feature
        group.bench_with_input(BenchmarkId::new("map_seeds", seeds), &seeds, |b, &k| b.iter(|| black_box(map_seeds(0..k, trial))));
    }
    group.finish();
}

criterion_group!(benches, solve_batch);
criterion_main!(benches);
