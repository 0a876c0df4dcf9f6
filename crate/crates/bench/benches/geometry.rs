use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use deformlab_bench::{fixtures, nearby};
use deformlab_core::geodesic::{connect, shoot, ConnectOptions};
use deformlab_core::jet::deformation_jet;

fn christoffel(c: &mut Criterion) {
    let mut group = c.benchmark_group("christoffel");
    for (m, x) in fixtures() {
        for order in [0, 4] {
            group.bench_with_input(BenchmarkId::new(m.id(), order), &order, |b, &k| {
                b.iter(|| m.christoffel(black_box(&x), k).unwrap())
            });
        }
    }
    group.finish();
}

fn geodesics(c: &mut Criterion) {
    let mut group = c.benchmark_group("geodesic");
    for (m, x) in fixtures() {
        let xp = nearby(&m, &x);
        group.bench_function(BenchmarkId::new("shoot", m.id()), |b| {
            b.iter(|| shoot(&m, black_box(&x), &[0.1, 0.05], 1.0, 1000).unwrap())
        });
        let opts = ConnectOptions::default();
        group.bench_function(BenchmarkId::new("connect", m.id()), |b| {
            b.iter(|| connect(&m, black_box(&x), black_box(&xp), &opts).unwrap())
        });
    }
    group.finish();
}

fn jets(c: &mut Criterion) {
    let mut group = c.benchmark_group("deformation_jet");
    group.sample_size(20);
    for (m, x) in fixtures() {
        for order in [6, 12] {
            group.bench_with_input(BenchmarkId::new(m.id(), order), &order, |b, &n| {
                b.iter(|| deformation_jet(&m, black_box(&x), n).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, christoffel, geodesics, jets);
criterion_main!(benches);
