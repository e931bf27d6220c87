use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use riffle_core::dense::DenseDistribution;
use riffle_core::fourier::{fourier_transform, inverse_fourier_transform, rifflehat};
use riffle_core::perm::factorial;

fn pseudo_random_dense(n: usize) -> DenseDistribution {
    // deterministic but unstructured weights; no RNG state to carry around
    let probs: Vec<f64> = (0..factorial(n))
        .map(|i| 1.0 + ((i * 2654435761 % 97) as f64) / 97.0)
        .collect();
    DenseDistribution::new_unnormalized(n, probs)
        .unwrap()
        .normalized()
        .unwrap()
}

fn bench_fourier_transform(c: &mut Criterion) {
    let mut group = c.benchmark_group("fourier_transform");
    for n in [4usize, 5, 6] {
        let h = pseudo_random_dense(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &h, |b, h| {
            b.iter(|| fourier_transform(black_box(h)).unwrap())
        });
    }
    group.finish();
}

fn bench_inverse_transform(c: &mut Criterion) {
    let mut group = c.benchmark_group("inverse_fourier_transform");
    for n in [4usize, 5, 6] {
        let hat = fourier_transform(&pseudo_random_dense(n)).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &hat, |b, hat| {
            b.iter(|| inverse_fourier_transform(black_box(hat)).unwrap())
        });
    }
    group.finish();
}

fn bench_rifflehat(c: &mut Criterion) {
    let mut group = c.benchmark_group("rifflehat");
    for (p, q) in [(2usize, 3usize), (3, 3), (3, 4)] {
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("{}+{}", p, q)),
            &(p, q),
            |b, &(p, q)| b.iter(|| rifflehat(p, q, black_box(0.5)).unwrap()),
        );
    }
    group.finish();
}

criterion_group!(
    benches,
    bench_fourier_transform,
    bench_inverse_transform,
    bench_rifflehat
);
criterion_main!(benches);
