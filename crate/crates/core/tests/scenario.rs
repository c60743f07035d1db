//! Properties of full learning runs on the three-user evaluation scenario.

use tailfill_core::config::{NetworkConfig, RunConfig, RunMode, UserConfig, Utility};
use tailfill_core::metrics::summarize;
use tailfill_core::{run_tail_waterfilling, run_with_source, ReplayFading};

fn network(alpha: f64, utility: Utility) -> NetworkConfig {
    NetworkConfig {
        users: [1.0, 2.0, 1.5]
            .iter()
            .map(|&noise_variance| UserConfig { noise_variance, confidence: alpha, fading_scale: 1.0, weight: 1.0 / 3.0 })
            .collect(),
        power_budget: 10.0,
        utility,
    }
}

fn run(seed: u64) -> RunConfig {
    RunConfig::new(100_000, 1e-3, 1e-4, 1e-4, seed)
}

#[test]
fn mean_power_meets_budget() {
    let net = network(0.53, Utility::WeightedSumrate);
    let traj = run_tail_waterfilling(&net, &run(31)).unwrap();
    let stats = summarize(&traj, &net, 0.2).unwrap();
    assert!((stats.mean_total_power - 10.0).abs() <= 1.0, "{}", stats.mean_total_power);
    assert!(stats.mean_mu > 0.0);
}

#[test]
fn summary_survives_thinning() {
    let net = network(0.53, Utility::WeightedSumrate);
    let traj = run_tail_waterfilling(&net, &run(32)).unwrap();
    let full = summarize(&traj, &net, 0.2).unwrap();
    let thin = summarize(&traj.thinned(10), &net, 0.2).unwrap();
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs();
    assert!(rel(full.mean_total_power, thin.mean_total_power) < 0.02);
    assert!(rel(full.mean_mu, thin.mean_mu) < 0.02);
    for (a, b) in full.users.iter().zip(&thin.users) {
        assert!(rel(a.mean_rate, b.mean_rate) < 0.02);
        assert!(rel(a.mean_power, b.mean_power) < 0.02);
        assert!(rel(a.mean_target, b.mean_target) < 0.02);
    }
}

#[test]
fn fairness_narrows_rate_spread() {
    for seed in [33, 34] {
        let pf_net = network(0.51, Utility::ProportionalFairness);
        let sr_net = network(0.51, Utility::WeightedSumrate);
        let fading = ReplayFading::record(&pf_net, seed, 100_000);
        let pf = run_with_source(&pf_net, &run(seed), &mut fading.clone()).unwrap();
        let sr = run_with_source(&sr_net, &run(seed), &mut fading.clone()).unwrap();
        let spread_pf = summarize(&pf, &pf_net, 0.2).unwrap().mean_rate_spread();
        let spread_sr = summarize(&sr, &sr_net, 0.2).unwrap().mean_rate_spread();
        assert!(spread_pf < spread_sr, "seed {seed}: {spread_pf} vs {spread_sr}");
    }
}

#[test]
fn risk_aware_contracts_variance_against_neutral_baseline() {
    let net = network(0.53, Utility::WeightedSumrate);
    let fading = ReplayFading::record(&net, 35, 100_000);
    let aware = run_with_source(&net, &run(35), &mut fading.clone()).unwrap();
    let neutral_run = run(35).with_mode(RunMode::RiskNeutral);
    let neutral = run_with_source(&net, &neutral_run, &mut fading.clone()).unwrap();
    let a = summarize(&aware, &net, 0.2).unwrap();
    let n = summarize(&neutral, &net, 0.2).unwrap();
    for (ua, un) in a.users.iter().zip(&n.users) {
        assert!(ua.rate_variance < un.rate_variance);
        assert!(ua.interdecile_range < un.interdecile_range);
        assert!(ua.rate_cvar > un.rate_cvar);
    }
    assert!((n.mean_total_power - 10.0).abs() <= 1.0);
}
