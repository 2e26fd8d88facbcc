use std::hint::black_box;

use cheeger_core::granulation::{choose_gamma, BoxGrid};
use cheeger_core::optimize::{local_search_bisection, median_split, refine_pipeline, sweep_cut, SweepMode};
use cheeger_core::{CheegerObjective, DomainDensity, GeoGraph, Kernel, Partition, DEFAULT_TAIL_EPS};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn radius(n: usize) -> f64 {
    2.0 * ((n as f64).ln() / n as f64).sqrt()
}

fn build(c: &mut Criterion) {
    let dd = DomainDensity::unit_square();
    let mut group = c.benchmark_group("build");
    group.sample_size(10);
    for n in [5_000usize, 20_000] {
        let cloud = dd.sample_points(n, 1).unwrap();
        for (name, kernel) in [("uniform", Kernel::uniform(2).unwrap()), ("gaussian", Kernel::gaussian(2).unwrap())] {
            // Keep the mean degree comparable: the gaussian support is wider.
            let r = if name == "uniform" { radius(n) } else { radius(n) / 3.0 };
            group.bench_with_input(BenchmarkId::new(name, n), &n, |b, _| {
                b.iter(|| GeoGraph::build(black_box(cloud.clone()), r, kernel.clone(), DEFAULT_TAIL_EPS).unwrap())
            });
        }
    }
    group.finish();
}

fn functionals(c: &mut Criterion) {
    let n = 20_000;
    let dd = DomainDensity::unit_square();
    let g = GeoGraph::build(dd.sample_points(n, 2).unwrap(), radius(n), Kernel::uniform(2).unwrap(), DEFAULT_TAIL_EPS)
        .unwrap();
    let y = Partition::from_indices(n, (0..n).filter(|&i| g.cloud().point(i)[0] < 0.5));
    let obj = CheegerObjective::new(1, 1).unwrap();
    c.bench_function("cut_weight/20000", |b| b.iter(|| g.cut_weight(black_box(&y))));
    c.bench_function("objective/20000", |b| b.iter(|| g.objective(black_box(&y), obj).unwrap()));
}

fn optimisers(c: &mut Criterion) {
    let n = 8_000;
    let r = radius(n);
    let dd = DomainDensity::unit_square();
    let g = GeoGraph::build(dd.sample_points(n, 3).unwrap(), r, Kernel::uniform(2).unwrap(), DEFAULT_TAIL_EPS).unwrap();
    let grid = BoxGrid::build(&dd, g.cloud(), r, choose_gamma(n, r, 2).gamma).unwrap();
    let obj = CheegerObjective::new(1, 1).unwrap();
    let mut group = c.benchmark_group("optimise");
    group.sample_size(10);
    group.bench_function("sweep/8000", |b| b.iter(|| sweep_cut(&g, obj, SweepMode::Axis).unwrap()));
    group.bench_function("refine/8000", |b| b.iter(|| refine_pipeline(&g, &grid, obj).unwrap()));
    let y0 = median_split(&g);
    group.bench_function("bisect_local/8000", |b| b.iter(|| local_search_bisection(&g, &y0, 50).unwrap()));
    group.finish();
}

criterion_group!(benches, build, functionals, optimisers);
criterion_main!(benches);
