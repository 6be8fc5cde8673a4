use cascade_bench::toy_model;
use cascade_core::decoding::{decode_ar, BeamConfig, Stage};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn beam(c: &mut Criterion) {
    let (m, p) = toy_model(24);
    let src: Vec<usize> = (4..12).collect();
    let mut group = c.benchmark_group("beam");
    group.sample_size(20);
    for k in [1, 4, 8] {
        group.bench_with_input(BenchmarkId::from_parameter(k), &k, |bench, &k| {
            bench.iter(|| decode_ar(Stage::new(&m, &p), &src, &BeamConfig::new(k, 16)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, beam);
criterion_main!(benches);
