use std::sync::Arc;

use criterion::{black_box, criterion_group, criterion_main, Criterion};

use adlab_core::cascade::{build_sequences, CascadeParams};
use adlab_core::norms::holder_seminorm;
use adlab_core::scalarsolver::{advect_exact, diffuse_exact, initial_datum, solve, SolveOptions};
use adlab_core::shearflow::{build_schedule, truncate, Profile};

fn benches(c: &mut Criterion) {
    let seq = build_sequences(&CascadeParams::desk_scale()).unwrap();
    let schedule = Arc::new(build_schedule(&seq, Profile::Sine).unwrap());
    let stage = schedule.stages[0].clone();
    let theta = initial_datum(256).unwrap();

    c.bench_function("advect_exact n=256", |b| {
        b.iter(|| advect_exact(black_box(&theta), &stage, stage.start, stage.end()).unwrap())
    });
    c.bench_function("diffuse_exact n=256", |b| b.iter(|| diffuse_exact(black_box(&theta), 1e-3, 1e-3).unwrap()));
    c.bench_function("holder_seminorm n=256", |b| b.iter(|| holder_seminorm(black_box(&theta), 0.3).unwrap()));

    let u1 = truncate(&schedule, 1).unwrap();
    let mut group = c.benchmark_group("solve");
    group.sample_size(10);
    group.bench_function("u_1 at nu_tilde_1, n=128", |b| {
        b.iter(|| solve(&u1, seq.nu_tilde[1], &initial_datum(128).unwrap(), &SolveOptions::new(vec![1.0])).unwrap())
    });
    group.finish();
}

criterion_group!(solver, benches);
criterion_main!(solver);
