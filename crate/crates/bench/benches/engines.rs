use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use zfhgm::baselines::gamma_approx_measures;
use zfhgm::hgm::{expansion_point, find_operator, hgm_params, SolverConfig};
use zfhgm::mc::{estimate, SimConfig};
use zfhgm::series::{eval_double_series, eval_series, TruncationPolicy};
use zfhgm_bench::{fixture, fixtures, outage, tau};

fn engines(c: &mut Criterion) {
    let mut g = c.benchmark_group("outage");
    g.sample_size(10).measurement_time(Duration::from_secs(5));
    let solver = SolverConfig::default();
    let policy = TruncationPolicy::default();
    for f in fixtures() {
        g.bench_with_input(BenchmarkId::new("hgm", f.name), &f, |b, f| {
            b.iter(|| hgm_params(&outage(), &f.params, f.spec.k_db, &solver))
        });
        g.bench_with_input(BenchmarkId::new("series", f.name), &f, |b, f| {
            b.iter(|| eval_series(&outage(), &f.params, &policy))
        });
        g.bench_with_input(BenchmarkId::new("double-series", f.name), &f, |b, f| {
            b.iter(|| eval_double_series(&outage(), &f.params, &policy))
        });
        g.bench_with_input(BenchmarkId::new("gamma-approx", f.name), &f, |b, f| {
            let r = f.spec.correlation().unwrap();
            b.iter(|| gamma_approx_measures(&f.spec, &r, f.gamma_s, &outage()))
        });
        g.bench_with_input(BenchmarkId::new("mc-10k", f.name), &f, |b, f| {
            let r = f.spec.correlation().unwrap();
            let cfg = SimConfig::with_samples(10_000, 1);
            b.iter(|| estimate(&f.spec, &r, f.gamma_s, tau(), &cfg))
        });
    }
    g.finish();
}

fn operator_guessing(c: &mut Criterion) {
    let mut g = c.benchmark_group("guess");
    g.sample_size(10).measurement_time(Duration::from_secs(10));
    let f = fixture("6x4", 6, 4, 7.0, 51.0, 15.0);
    let cfg = SolverConfig::default();
    let z0 = expansion_point(f.params.x2, 7.0, cfg.z0_k_db);
    g.bench_function("outage-6x4", |b| {
        b.iter(|| find_operator(&outage(), &f.params, z0, f.params.x2, &cfg))
    });
    g.finish();
}

criterion_group!(benches, engines, operator_guessing);
criterion_main!(benches);
