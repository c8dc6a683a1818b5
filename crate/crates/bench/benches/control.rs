use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use robinsync::control::{NullControlSynthesizer, Solver, SynthesisConfig};
use robinsync::sim::BoxDomain;
use robinsync_bench::{coupled_system, smooth_state};

fn control(c: &mut Criterion) {
    let mut g = c.benchmark_group("control");
    g.sample_size(10);
    for nodes in [20usize, 40] {
        let sys = coupled_system(2, BoxDomain::interval(1.0, nodes).unwrap());
        let cfg = SynthesisConfig::default();
        g.bench_with_input(BenchmarkId::new("assemble", nodes), &nodes, |b, _| {
            b.iter(|| NullControlSynthesizer::new(&sys, &cfg).unwrap())
        });
        let init = smooth_state(&sys);
        for (name, solver) in [
            ("cholesky", Solver::Cholesky),
            (
                "cg",
                Solver::Cg {
                    max_iter: 500,
                    tol: 1e-10,
                },
            ),
        ] {
            let synth = NullControlSynthesizer::new(&sys, &SynthesisConfig { solver, ..cfg.clone() }).unwrap();
            g.bench_with_input(BenchmarkId::new(format!("solve-{name}"), nodes), &nodes, |b, _| {
                b.iter(|| synth.solve(&init).unwrap())
            });
        }
    }
    g.finish();
}

criterion_group!(benches, control);
criterion_main!(benches);
