use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use robinsync::algebra::{
    build_sync_matrix, check_cp_compatibility, reduce_coupling, symmetric_similarity, CouplingSpec, GroupPartition,
};
use robinsync::nalgebra::DMatrix;

/// Block-constant matrix, compatible with `part` by construction.
fn block_matrix(part: &GroupPartition) -> DMatrix<f64> {
    let n = part.n();
    let group = |i: usize| part.groups().position(|g| g.contains(&i)).unwrap();
    DMatrix::from_fn(n, n, |i, j| {
        let (r, s) = (group(i), group(j));
        let size = part.groups().nth(s).unwrap().len() as f64;
        (1.0 + r as f64 + 2.0 * s as f64) / size + if i == j { 1.0 } else { 0.0 }
    })
}

fn partition(n: usize) -> GroupPartition {
    GroupPartition::new((0..=n).step_by(2).collect()).unwrap()
}

fn algebra(c: &mut Criterion) {
    let mut g = c.benchmark_group("algebra");
    for n in [8usize, 32, 96] {
        let part = partition(n);
        let m = block_matrix(&part);
        let sym = (&m + m.transpose()) * 0.5;
        g.bench_with_input(BenchmarkId::new("compatibility", n), &n, |b, _| {
            b.iter(|| check_cp_compatibility(black_box(&m), &part, 1e-9).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("similarity", n), &n, |b, _| {
            b.iter(|| symmetric_similarity(black_box(&sym), 1e-8).unwrap())
        });
        let cs = build_sync_matrix(&part);
        let coupling = CouplingSpec::with_any_rank(m.clone(), DMatrix::zeros(n, n), DMatrix::identity(n, n)).unwrap();
        g.bench_with_input(BenchmarkId::new("reduce", n), &n, |b, _| {
            b.iter(|| reduce_coupling(black_box(&coupling), &cs, 1e-9).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, algebra);
criterion_main!(benches);
