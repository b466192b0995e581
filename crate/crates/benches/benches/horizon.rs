use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rbo_benches::gramacy_lee_gp;
use rbo_core::optimizer::propose_next;
use rbo_core::rollout::rollout_estimate;
use rbo_core::{AdamConfig, Bounds, RolloutConfig};

fn horizon_cost(c: &mut Criterion) {
    let gp = gramacy_lee_gp();
    let mut group = c.benchmark_group("rollout_value_and_grad");
    for h in 0..=3 {
        let cfg = RolloutConfig::new(Bounds::unit(1), h, 64);
        let stream = cfg.stream(1).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(h), &h, |b, _| {
            b.iter(|| rollout_estimate(&gp, &[0.4], &cfg, &stream, true).unwrap())
        });
    }
    group.finish();

    let adam = AdamConfig { max_iters: 10, restarts: 2, ..Default::default() };
    let mut group = c.benchmark_group("propose_next");
    group.sample_size(10);
    for h in 0..=3 {
        let cfg = RolloutConfig::new(Bounds::unit(1), h, 16);
        group.bench_with_input(BenchmarkId::from_parameter(h), &h, |b, _| {
            b.iter(|| propose_next(&gp, &cfg, &adam, 3).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, horizon_cost);
criterion_main!(benches);
