use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use wmopt_bench::spin_oscillator;
use wmopt_core::oracle::{boundary_scan, ScanConfig};
use wmopt_core::simulator::PostselectionKernel;
use wmopt_core::{conditional_mean, extremal_outputs, DetectorMoments, Tolerances};

fn simulation(c: &mut Criterion) {
    let tol = Tolerances::default();
    let mut g = c.benchmark_group("conditional_mean");
    for dim in [8, 16, 32] {
        let s = spin_oscillator(dim, 0.1);
        g.bench_with_input(BenchmarkId::from_parameter(dim), &s, |b, s| {
            b.iter(|| conditional_mean(black_box(s), &tol).unwrap())
        });
    }
    g.finish();

    let mut g = c.benchmark_group("kernel");
    for dim in [8, 16, 32] {
        let s = spin_oscillator(dim, 0.1);
        g.bench_with_input(BenchmarkId::new("build", dim), &s, |b, s| {
            b.iter(|| PostselectionKernel::new(&s.a, &s.rho_det, &s.q, &s.o, black_box(s.lambda), &tol).unwrap())
        });
        let k = PostselectionKernel::new(&s.a, &s.rho_det, &s.q, &s.o, s.lambda, &tol).unwrap();
        g.bench_with_input(BenchmarkId::new("evaluate", dim), &s, |b, s| {
            b.iter(|| k.evaluate(black_box(&s.rho_i), &s.e_f))
        });
    }
    g.finish();
}

fn optimization(c: &mut Criterion) {
    let m = DetectorMoments::from_acs(0.3, 1.0, 0.5);
    c.bench_function("extremal_outputs", |b| b.iter(|| extremal_outputs(black_box(&m)).unwrap()));
    let cfg = ScanConfig {
        grid_points_per_axis: 100,
        ..ScanConfig::default()
    };
    c.bench_function("boundary_scan/100", |b| b.iter(|| boundary_scan(black_box(&m), &cfg).unwrap()));
}

criterion_group!(benches, simulation, optimization);
criterion_main!(benches);
