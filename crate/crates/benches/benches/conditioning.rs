use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rbo_benches::square_data;
use rbo_core::{Dataset, GpState, KernelParams};

fn conditioning(c: &mut Criterion) {
    let params = KernelParams::new(1.0, vec![0.3, 0.4]).unwrap();
    let mut group = c.benchmark_group("add_observation");
    for n in [50usize, 100, 200] {
        let (pts, y) = square_data(n + 1, 7);
        let base = GpState::fit(&Dataset::new(2, &pts[..n], &y[..n]).unwrap(), params.clone(), 1e-4).unwrap();
        let full = Dataset::new(2, &pts, &y).unwrap();
        group.bench_with_input(BenchmarkId::new("schur_append", n), &n, |b, _| {
            b.iter(|| base.condition(&pts[n], y[n]).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("refit", n), &n, |b, _| {
            b.iter(|| GpState::fit(&full, params.clone(), 1e-4).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, conditioning);
criterion_main!(benches);
