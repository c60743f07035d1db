//! Post-processing of trajectories: rate histograms, outage curves, summary
//! statistics and paired-run comparisons.

use crate::config::{NetworkConfig, RunMode, Utility};
use crate::learning::Trajectory;
use crate::risk;
use serde::{Deserialize, Serialize};
use std::io::Write;

pub const DEFAULT_HISTOGRAM_BINS: usize = 60;
pub const DEFAULT_OUTAGE_POINTS: usize = 300;
/// Rate axis shared by histograms and outage grids, in nats.
pub const DEFAULT_RATE_RANGE: (f64, f64) = (0.0, 3.0);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("empty sample")]
    EmptySample,
    #[error("no records left after discarding the burn-in window")]
    EmptyAfterBurnIn,
    #[error("histogram needs at least one bin")]
    ZeroBins,
    #[error("range [{0}, {1}] is empty or not finite")]
    BadRange(f64, f64),
    #[error("thresholds must be strictly increasing")]
    UnorderedThresholds,
    #[error(transparent)]
    Risk(#[from] risk::RiskError),
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutageCurve {
    pub thresholds: Vec<f64>,
    /// `probabilities[user][k] = P(r_user <= thresholds[k])`.
    pub probabilities: Vec<Vec<f64>>,
}

/// Empirical CDF of each user's rates at every threshold.
pub fn outage_curve(rates: &[Vec<f64>], thresholds: &[f64]) -> Result<OutageCurve, MetricsError> {
    if rates.is_empty() || rates.iter().any(Vec::is_empty) {
        return Err(MetricsError::EmptySample);
    }
    if thresholds.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(MetricsError::UnorderedThresholds);
    }
    let probabilities = rates
        .iter()
        .map(|sample| {
            let mut sorted = sample.clone();
            sorted.sort_by(f64::total_cmp);
            let n = sorted.len() as f64;
            thresholds
                .iter()
                .map(|&r0| sorted.partition_point(|&v| v <= r0) as f64 / n)
                .collect()
        })
        .collect();
    Ok(OutageCurve {
        thresholds: thresholds.to_vec(),
        probabilities,
    })
}

impl OutageCurve {
    /// Width of the threshold interval over which `user`'s curve first
    /// reaches `lo` and then `hi`; `None` if either level is never reached.
    pub fn rise_width(&self, user: usize, lo: f64, hi: f64) -> Option<f64> {
        let curve = &self.probabilities[user];
        let first = |level: f64| {
            curve
                .iter()
                .position(|&p| p >= level)
                .map(|k| self.thresholds[k])
        };
        Some(first(hi)? - first(lo)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["threshold".to_string()];
        header.extend((1..=self.probabilities.len()).map(|i| format!("p_out_{i}")));
        wtr.write_record(&header)?;
        for (k, r0) in self.thresholds.iter().enumerate() {
            let mut row = vec![r0.to_string()];
            row.extend(self.probabilities.iter().map(|p| p[k].to_string()));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateHistogram {
    pub edges: Vec<f64>,
    /// `frequencies[user][bin]`, each row summing to one.
    pub frequencies: Vec<Vec<f64>>,
}

/// Relative-frequency histogram; samples outside `range` land in the end bins.
pub fn rate_histogram(
    rates: &[Vec<f64>],
    bin_count: usize,
    range: (f64, f64),
) -> Result<RateHistogram, MetricsError> {
    if bin_count == 0 {
        return Err(MetricsError::ZeroBins);
    }
    let (lo, hi) = range;
    if !(lo < hi && lo.is_finite() && hi.is_finite()) {
        return Err(MetricsError::BadRange(lo, hi));
    }
    if rates.is_empty() || rates.iter().any(Vec::is_empty) {
        return Err(MetricsError::EmptySample);
    }
    let width = (hi - lo) / bin_count as f64;
    let frequencies = rates
        .iter()
        .map(|sample| {
            let mut counts = vec![0usize; bin_count];
            for &v in sample {
                let bin = ((v - lo) / width).floor();
                let bin = if bin.is_nan() || bin < 0.0 {
                    0
                } else {
                    (bin as usize).min(bin_count - 1)
                };
                counts[bin] += 1;
            }
            let n = sample.len() as f64;
            counts.into_iter().map(|c| c as f64 / n).collect()
        })
        .collect();
    Ok(RateHistogram {
        edges: linspace(lo, hi, bin_count + 1),
        frequencies,
    })
}

impl RateHistogram {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["bin_lo".to_string(), "bin_hi".to_string()];
        header.extend((1..=self.frequencies.len()).map(|i| format!("freq_{i}")));
        wtr.write_record(&header)?;
        for (k, edge) in self.edges.windows(2).enumerate() {
            let mut row = vec![edge[0].to_string(), edge[1].to_string()];
            row.extend(self.frequencies.iter().map(|f| f[k].to_string()));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserStats {
    pub mean_rate: f64,
    pub rate_variance: f64,
    /// 90% minus 10% lower quantile of the rate.
    pub interdecile_range: f64,
    /// Lower-tail CV@R of the rate at the user's configured confidence.
    pub rate_cvar: f64,
    pub mean_power: f64,
    pub mean_target: f64,
    pub mean_lambda: f64,
    /// Time-averaged `x*(lambda)`; absent under weighted sumrate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_ergodic_rate: Option<f64>,
    /// CV@R of the rate (at the effective confidence) minus the ergodic rate.
    pub cvar_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub samples: usize,
    pub users: Vec<UserStats>,
    pub mean_total_power: f64,
    pub mean_mu: f64,
    /// `P0` minus the mean total power.
    pub power_gap: f64,
}

impl SummaryStats {
    /// Largest minus smallest per-user mean rate.
    pub fn mean_rate_spread(&self) -> f64 {
        let means = self.users.iter().map(|u| u.mean_rate);
        let max = means.clone().fold(f64::NEG_INFINITY, f64::max);
        let min = means.fold(f64::INFINITY, f64::min);
        max - min
    }
}

/// Per-user rates of the post-burn-in records.
pub fn rate_samples(trajectory: &Trajectory, burn_in_fraction: f64) -> Vec<Vec<f64>> {
    let records = trajectory.post_burn_in(burn_in_fraction);
    (0..trajectory.user_count())
        .map(|i| records.iter().map(|r| r.rates[i]).collect())
        .collect()
}

fn interdecile(values: &[f64]) -> Result<f64, risk::RiskError> {
    Ok(risk::quantile(values, 0.9)? - risk::quantile(values, 0.1)?)
}

pub fn summarize(
    trajectory: &Trajectory,
    network: &NetworkConfig,
    burn_in_fraction: f64,
) -> Result<SummaryStats, MetricsError> {
    let records = trajectory.post_burn_in(burn_in_fraction);
    if records.is_empty() {
        return Err(MetricsError::EmptyAfterBurnIn);
    }
    let count = records.len() as f64;
    let avg = |f: &dyn Fn(&crate::learning::IterationRecord) -> f64| {
        records.iter().map(f).sum::<f64>() / count
    };
    let rates = rate_samples(trajectory, burn_in_fraction);

    let mut users = Vec::with_capacity(network.user_count());
    for (i, user) in network.users.iter().enumerate() {
        let r = &rates[i];
        let effective_alpha = match trajectory.run.mode {
            RunMode::RiskAware => user.confidence,
            RunMode::RiskNeutral => 1.0,
        };
        let rate_cvar = risk::cvar_lower_reward(r, user.confidence)?;
        let mean_ergodic_rate = match network.utility {
            Utility::WeightedSumrate => None,
            Utility::ProportionalFairness => Some(avg(&|rec| {
                rec.primal.rates_ergodic.as_ref().map_or(f64::NAN, |x| x[i])
            })),
        };
        let cvar_gap = match mean_ergodic_rate {
            None => 0.0,
            Some(x) => risk::cvar_lower_reward(r, effective_alpha)? - x,
        };
        users.push(UserStats {
            mean_rate: risk::mean(r),
            rate_variance: risk::variance(r),
            interdecile_range: interdecile(r)?,
            rate_cvar,
            mean_power: avg(&|rec| rec.powers[i]),
            mean_target: avg(&|rec| rec.primal.targets[i]),
            mean_lambda: avg(&|rec| rec.dual.lambdas[i]),
            mean_ergodic_rate,
            cvar_gap,
        });
    }
    let mean_total_power = avg(&|rec| rec.total_power());
    Ok(SummaryStats {
        samples: records.len(),
        users,
        mean_total_power,
        mean_mu: avg(&|rec| rec.dual.mu),
        power_gap: network.power_budget - mean_total_power,
    })
}

/// One row of a paired-run comparison: `b` relative to `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserDelta {
    pub user: usize,
    pub mean_rate_delta: f64,
    pub variance_delta: f64,
    pub interdecile_delta: f64,
    pub cvar_delta: f64,
    pub variance_ratio: f64,
    pub interdecile_ratio: f64,
    pub outage_max_abs_diff: f64,
    pub outage_mean_abs_diff: f64,
}

/// Per-user deltas of run `a` versus run `b` (ratios are `a / b`).
pub fn compare_runs(
    a: &SummaryStats,
    b: &SummaryStats,
    outage_a: &OutageCurve,
    outage_b: &OutageCurve,
) -> Vec<UserDelta> {
    a.users
        .iter()
        .zip(&b.users)
        .enumerate()
        .map(|(i, (ua, ub))| {
            let diffs: Vec<f64> = outage_a.probabilities[i]
                .iter()
                .zip(&outage_b.probabilities[i])
                .map(|(pa, pb)| (pa - pb).abs())
                .collect();
            UserDelta {
                user: i + 1,
                mean_rate_delta: ua.mean_rate - ub.mean_rate,
                variance_delta: ua.rate_variance - ub.rate_variance,
                interdecile_delta: ua.interdecile_range - ub.interdecile_range,
                cvar_delta: ua.rate_cvar - ub.rate_cvar,
                variance_ratio: ua.rate_variance / ub.rate_variance,
                interdecile_ratio: ua.interdecile_range / ub.interdecile_range,
                outage_max_abs_diff: diffs.iter().copied().fold(0.0, f64::max),
                outage_mean_abs_diff: if diffs.is_empty() {
                    0.0
                } else {
                    diffs.iter().sum::<f64>() / diffs.len() as f64
                },
            }
        })
        .collect()
}

pub fn write_delta_csv<W: Write>(writer: W, deltas: &[UserDelta]) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        "user",
        "mean_rate_delta",
        "variance_delta",
        "interdecile_delta",
        "cvar_delta",
        "variance_ratio",
        "interdecile_ratio",
        "outage_max_abs_diff",
        "outage_mean_abs_diff",
    ])?;
    for d in deltas {
        wtr.write_record([
            d.user.to_string(),
            d.mean_rate_delta.to_string(),
            d.variance_delta.to_string(),
            d.interdecile_delta.to_string(),
            d.cvar_delta.to_string(),
            d.variance_ratio.to_string(),
            d.interdecile_ratio.to_string(),
            d.outage_max_abs_diff.to_string(),
            d.outage_mean_abs_diff.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
