use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use spdprox::field::{gen_synthetic, Noise};
use spdprox::jobs::{run_denoise, Filter, WeightPolicy};
use spdprox::objectives::{Karcher, Objective};
use spdprox::par::Execution;
use spdprox::prox::ProxConfig;
use spdprox::sample::random_spd;
use spdprox::spd::SpdPoint;

fn executions() -> [(&'static str, Execution); 2] {
    [
        ("sequential", Execution::Sequential),
        ("parallel", Execution::from_jobs(0)),
    ]
}

fn denoise(c: &mut Criterion) {
    let (_, noisy) = gen_synthetic(3, 6, 6, Noise::Dense { scale: 0.3 }, 1).unwrap();
    let cfg = ProxConfig::default();
    let mut group = c.benchmark_group("denoise_6x6");
    group.sample_size(10);
    for (name, exec) in executions() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| {
                run_denoise(
                    black_box(&noisy),
                    3,
                    Filter::Mean,
                    WeightPolicy::Uniform,
                    &cfg,
                    exec,
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

fn karcher_batch(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let data: Vec<SpdPoint> = (0..9).map(|_| random_spd(&mut rng, 3, 0.6)).collect();
    let f = Karcher::uniform(data).unwrap();
    let queries: Vec<SpdPoint> = (0..512).map(|_| random_spd(&mut rng, 3, 0.6)).collect();
    let mut group = c.benchmark_group("karcher_value_and_gradient_512");
    for (name, exec) in executions() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| {
                exec.map(black_box(&queries), |_, x| {
                    let g = f.subgradient(x).unwrap().unwrap();
                    f.value(x).unwrap() + g.norm()
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, denoise, karcher_batch);
criterion_main!(benches);
