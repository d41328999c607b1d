use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mvsc_bench::{feature_laplacian, mixture, planted_subspaces};
use mvsc_core::admm::{solve_view, AdmmConfig, ViewSystem};
use mvsc_core::neighbors::feature_distances;
use mvsc_core::{fit, mscan_update_z, update_similarity, SolverConfig, Variant};

fn graph_update(c: &mut Criterion) {
    let mut group = c.benchmark_group("update_similarity");
    for n in [100, 200, 400] {
        let data = mixture(n, 0.0);
        let table = feature_distances(data.views());
        group.bench_with_input(BenchmarkId::from_parameter(n), &table, |b, t| {
            b.iter(|| update_similarity(black_box(t), 9).unwrap())
        });
    }
    group.finish();
}

fn subspace_steps(c: &mut Criterion) {
    let x = planted_subspaces(40, 20, 3, 0);
    let l = feature_laplacian(std::slice::from_ref(&x));
    let config = AdmmConfig::default();
    let sys = ViewSystem::new(0, &x, config.alpha).unwrap();
    c.bench_function("admm solve_view n=40", |b| {
        b.iter(|| solve_view(&sys, black_box(&l), 2, &config, None).unwrap())
    });

    let data = mixture(200, 0.0);
    let l = feature_laplacian(data.views());
    c.bench_function("mscan_update_z n=200", |b| {
        b.iter(|| mscan_update_z(data.view(0), black_box(&l), 1e5, 1.0).unwrap())
    });
}

fn end_to_end(c: &mut Criterion) {
    let mut group = c.benchmark_group("fit n=200");
    group.sample_size(10);
    let data = mixture(200, 0.3);
    for variant in [Variant::Mscan, Variant::Mscam] {
        let config = SolverConfig {
            alpha: 1e5,
            variant,
            ..SolverConfig::default()
        };
        group.bench_function(variant.to_string(), |b| b.iter(|| fit(black_box(&data), &config).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, graph_update, subspace_steps, end_to_end);
criterion_main!(benches);
