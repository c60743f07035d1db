use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;
use tailfill_core::config::{NetworkConfig, RunConfig, UserConfig, Utility};
use tailfill_core::{cvar_upper, optimal_power, run_tail_waterfilling, PolicyInputs};

fn scenario() -> NetworkConfig {
    let user = |noise_variance| UserConfig {
        noise_variance,
        confidence: 0.53,
        fading_scale: 1.0,
        weight: 1.0 / 3.0,
    };
    NetworkConfig {
        users: vec![user(1.0), user(2.0), user(1.5)],
        power_budget: 10.0,
        utility: Utility::WeightedSumrate,
    }
}

fn bench_policy(c: &mut Criterion) {
    let inputs = PolicyInputs {
        gain: 1.0,
        target: 1.0,
        lambda: 1.0,
        mu: 0.1,
        alpha: 0.53,
        noise_variance: 1.0,
    };
    c.bench_function("optimal_power", |b| {
        b.iter(|| optimal_power(black_box(&inputs)))
    });
}

fn bench_cvar(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let values: Vec<f64> = (0..10_000)
        .map(|_| rand::Rng::gen::<f64>(&mut rng))
        .collect();
    c.bench_function("cvar_upper_10k", |b| {
        b.iter(|| cvar_upper(black_box(&values), 0.1))
    });
}

fn bench_run(c: &mut Criterion) {
    let network = scenario();
    let run = RunConfig::new(10_000, 1e-3, 1e-4, 1e-4, 7);
    c.bench_function("run_10k_iterations", |b| {
        b.iter(|| run_tail_waterfilling(black_box(&network), &run))
    });
}

criterion_group!(benches, bench_policy, bench_cvar, bench_run);
criterion_main!(benches);
