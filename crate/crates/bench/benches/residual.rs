use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use hyperdisc::intersections::{find_double_points, Fixture, SearchParams};
use hyperdisc::residual;
use hyperdisc_bench::workload;

const POINTS: usize = 1024;

fn loss(c: &mut Criterion) {
    let mut g = c.benchmark_group("loss");
    g.throughput(Throughput::Elements(POINTS as u64));
    for width in [32, 64] {
        let (model, params, pts) = workload(width, POINTS);
        g.bench_with_input(BenchmarkId::new("value", width), &width, |b, _| {
            b.iter(|| residual::loss(&model, black_box(&params), &pts).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("value_and_grad", width), &width, |b, _| {
            b.iter(|| residual::loss_and_grad(&model, black_box(&params), &pts).unwrap())
        });
    }
    g.finish();
}

fn double_points(c: &mut Criterion) {
    let params = SearchParams { grid_res: 128, ..SearchParams::default() };
    c.bench_function("double_points/two-crossing/128", |b| {
        b.iter(|| find_double_points(&Fixture::TwoCrossing { flipped: false }, black_box(&params)).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = loss, double_points
}
criterion_main!(benches);
