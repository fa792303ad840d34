use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use halfspace_bench::{decomposed, settings};
use halfspace_core::halfspace::{decompose, oblique_form};
use halfspace_core::refine::{derivation_certificate, random_test_operator, refine_3x3};
use halfspace_core::OperatorSpec;

fn decompose_2x2(c: &mut Criterion) {
    let mut g = c.benchmark_group("decompose2");
    g.sample_size(10);
    for (name, spec) in [("harmonic", OperatorSpec::harmonic()), ("shift", OperatorSpec::shift())] {
        for n in [512, 1024, 2048] {
            g.bench_with_input(BenchmarkId::new(name, n), &n, |b, &n| {
                b.iter(|| decompose(black_box(&spec), n, &settings(1e-2)).unwrap())
            });
        }
    }
    g.finish();
}

fn oblique(c: &mut Criterion) {
    let d = decomposed(&OperatorSpec::harmonic(), 1024, 1e-2);
    c.bench_function("oblique/harmonic/1024", |b| b.iter(|| oblique_form(black_box(&d)).unwrap()));
}

fn refine(c: &mut Criterion) {
    let mut g = c.benchmark_group("refine3");
    g.sample_size(10);
    let d = decomposed(&OperatorSpec::harmonic(), 512, 0.05);
    g.bench_function("harmonic/512", |b| b.iter(|| refine_3x3(black_box(d.clone()), &settings(0.05)).unwrap()));
    g.finish();
}

fn derivation(c: &mut Criterion) {
    let f = refine_3x3(decomposed(&OperatorSpec::harmonic(), 256, 0.1), &settings(0.1)).unwrap();
    let x = random_test_operator(256, 0);
    c.bench_function("derivation/harmonic/256", |b| b.iter(|| derivation_certificate(black_box(&f), &x).unwrap()));
}

criterion_group!(benches, decompose_2x2, oblique, refine, derivation);
criterion_main!(benches);
