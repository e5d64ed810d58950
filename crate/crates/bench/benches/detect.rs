use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use las_bench::fixture;
use las_core::{las_detect, ml_bruteforce, Constellation, Initializer};
use std::hint::black_box;

fn las(c: &mut Criterion) {
    let mut group = c.benchmark_group("las_detect");
    for (order, n_tx) in [(4, 16), (4, 64), (16, 16)] {
        let q = Constellation::new(order).unwrap();
        let (draw, sigma2) = fixture(n_tx, &q, 10.0, 0);
        for init in [Initializer::Mf, Initializer::Mmse] {
            let id = BenchmarkId::new(format!("{order}qam_{init}"), n_tx);
            group.bench_with_input(id, &draw, |b, d| {
                b.iter(|| las_detect(&d.rm, black_box(&d.y), sigma2, init, &q, None).unwrap())
            });
        }
    }
    group.finish();
}

fn ml(c: &mut Criterion) {
    let mut group = c.benchmark_group("ml_bruteforce");
    group.sample_size(10);
    let q = Constellation::qam4();
    for n_tx in [2, 4, 6] {
        let (draw, _) = fixture(n_tx, &q, 6.0, 0);
        group.bench_with_input(BenchmarkId::from_parameter(n_tx), &draw, |b, d| {
            b.iter(|| ml_bruteforce(&d.rm, black_box(&d.y), &q).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, las, ml);
criterion_main!(benches);
