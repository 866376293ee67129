//! Compares the rayon-backed hot paths against their sequential fallbacks:
//! psi grid evaluation (the table-build kernel) and stabilized FEM assembly.
//!
//! Run with `cargo bench -p vms2d`. Build with `--no-default-features` to see
//! both "parallel" entries degrade to the serial timings.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use vms2d::fem::{assemble, assemble_serial, TauProvider, VelocityField};
use vms2d::geometry::build_structured_mesh;
use vms2d::stabilization::psi;
use vms2d::{par, PecletPair, Truncation};

/// psi at every node of a small Peclet grid, the kernel behind table builds.
fn psi_grid(c: &mut Criterion) {
    let tr = Truncation::square(40);
    let step = 0.5;
    let n = 17; // [-4, 4] x [-4, 4]
    let node = |idx: usize| {
        let (i1, i2) = (idx / n, idx % n);
        PecletPair::new(-4.0 + i1 as f64 * step, -4.0 + i2 as f64 * step)
    };
    let eval = |idx: usize| psi(node(idx), tr).unwrap();

    let mut group = c.benchmark_group("psi_grid_17x17_m40");
    group.sample_size(10);
    group.bench_function("parallel", |b| {
        b.iter(|| black_box(par::map_indexed(n * n, eval)))
    });
    group.bench_function("serial", |b| {
        b.iter(|| black_box(par::map_indexed_serial(n * n, eval)))
    });
    group.finish();
}

/// Full stabilized assembly (Codina coefficient, no table dependency) on a
/// 161x161 structured mesh: 51200 element integrations plus CSR scatter.
fn fem_assembly(c: &mut Criterion) {
    let mesh = build_structured_mesh(1.0, 1.0, 161, 161).unwrap();
    let vel = VelocityField::Constant { a1: 2.0, a2: -1.0 };
    let source = |x: f64, y: f64| 1.0 + x * y;
    let provider = TauProvider::Codina;

    let mut group = c.benchmark_group("assemble_161x161_codina");
    group.sample_size(10);
    group.bench_function("parallel", |b| {
        b.iter_batched(
            || (),
            |_| black_box(assemble(&mesh, 1e-3, &vel, &source, &provider).unwrap()),
            BatchSize::LargeInput,
        )
    });
    group.bench_function("serial", |b| {
        b.iter_batched(
            || (),
            |_| black_box(assemble_serial(&mesh, 1e-3, &vel, &source, &provider).unwrap()),
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

criterion_group!(benches, psi_grid, fem_assembly);
criterion_main!(benches);
