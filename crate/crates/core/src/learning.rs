//! Tail waterfilling: the stochastic primal-dual recursion.
//!
//! Each iteration observes one fading realization and, in order:
//!
//! 1. evaluates the closed-form policy with the previous `(t, lambda, mu)`;
//! 2. takes a stochastic subgradient ascent step on every target `t_i`;
//! 3. recovers the ergodic rates `x*(lambda)` from the utility;
//! 4. takes a projected descent step on `mu` using the realized total power;
//! 5. takes a projected descent step on every `lambda_i` using the realized
//!    CV@R-constraint gap (proportional fairness only; under weighted sumrate
//!    `lambda` is pinned to the weights).
//!
//! Every step reads only the previous iterate, so the order of 2-5 does not
//! change the result.

use crate::channel::{ChannelError, FadingSample, FadingSource, RngState};
use crate::config::{NetworkConfig, RunConfig, RunMode, Utility};
use crate::policy::{self, PolicyError, PolicyInputs, PowerDecision};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Smallest rate multiplier kept under proportional fairness, so `x = 1/lambda` stays finite.
pub const LAMBDA_FLOOR: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum LearningError {
    #[error("lambda[{user}] = {value} is below the floor {LAMBDA_FLOOR} required by proportional fairness")]
    LambdaUnderflow { user: usize, value: f64 },
    #[error("state became non-finite at iteration {iteration}")]
    NonFiniteState { iteration: u64 },
    #[error("policy evaluation failed at iteration {iteration}: {source}")]
    Policy { iteration: u64, source: PolicyError },
    #[error("fading source failed at iteration {iteration}: {source}")]
    Fading {
        iteration: u64,
        source: ChannelError,
    },
    #[error("fading sample has {found} gains, network has {expected} users")]
    GainCount { expected: usize, found: usize },
}

/// Natural-log Shannon rate `ln(1 + h p / s2)`, in nats.
pub fn instantaneous_rate(gain: f64, power: f64, noise_variance: f64) -> f64 {
    (gain * power / noise_variance).ln_1p()
}

/// Value of the Heaviside step at zero used by the target subgradient.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KinkSelection(pub f64);

impl KinkSelection {
    pub fn heaviside(self, x: f64) -> f64 {
        if x > 0.0 {
            1.0
        } else if x < 0.0 {
            0.0
        } else {
            self.0
        }
    }
}

/// Target subgradient for a decision already taken.
///
/// When the rate-target branch allocated positive power the rate equals the
/// target by construction; that case is evaluated at the kink directly rather
/// than through the rounded `t - ln(1 + ...)`.
pub fn subgradient_for(
    inputs: &PolicyInputs,
    decision: &PowerDecision,
    rate: f64,
    kink: KinkSelection,
) -> f64 {
    let step = if decision.meets_target_exactly() {
        kink.0
    } else {
        kink.heaviside(inputs.target - rate)
    };
    inputs.lambda - inputs.lambda / inputs.alpha * step
}

/// `lambda - (lambda/alpha) H[t - r(p*)]` with `p*` the optimal power.
pub fn t_subgradient(inputs: &PolicyInputs, kink: KinkSelection) -> Result<f64, PolicyError> {
    let decision = policy::decide(inputs)?;
    let rate = instantaneous_rate(inputs.gain, decision.power, inputs.noise_variance);
    Ok(subgradient_for(inputs, &decision, rate, kink))
}

pub fn update_t(target: f64, subgradient: f64, step_t: f64) -> f64 {
    target + step_t * subgradient
}

/// `[mu - eps (P0 - sum p)]_+`.
pub fn update_mu(mu: f64, total_power: f64, power_budget: f64, step_mu: f64) -> f64 {
    (mu - step_mu * (power_budget - total_power)).max(0.0)
}

/// Realized slack of the CV@R rate constraint, `-x + t - (t - r)_+ / alpha`.
pub fn rate_constraint_gap(x: f64, target: f64, rate: f64, alpha: f64) -> f64 {
    -x + target - (target - rate).max(0.0) / alpha
}

/// `[lambda - eps (-x + t - (t - r)_+ / alpha)]_+`.
pub fn update_lambda(
    lambda: f64,
    x: f64,
    target: f64,
    rate: f64,
    alpha: f64,
    step_lambda: f64,
) -> f64 {
    (lambda - step_lambda * rate_constraint_gap(x, target, rate, alpha)).max(0.0)
}

/// Risk-neutral counterpart of [`update_lambda`]: the ergodic constraint `x <= E[r]`.
pub fn update_lambda_neutral(lambda: f64, x: f64, rate: f64, step_lambda: f64) -> f64 {
    (lambda - step_lambda * (rate - x)).max(0.0)
}

/// Maximizer of `f0(x) - lambda^T x`.
#[derive(Debug, Clone, PartialEq)]
pub enum ErgodicRates {
    Rates(Vec<f64>),
    /// Weighted sumrate: bounded only at `lambda = w`, so `x` and `lambda`
    /// both drop out of the recursion.
    Eliminated,
}

pub fn utility_x_argmax(
    utility: Utility,
    dual: &DualState,
    weights: &[f64],
) -> Result<ErgodicRates, LearningError> {
    match utility {
        Utility::WeightedSumrate => {
            debug_assert_eq!(
                dual.lambdas, weights,
                "sumrate multipliers must stay pinned to the weights"
            );
            Ok(ErgodicRates::Eliminated)
        }
        Utility::ProportionalFairness => {
            if let Some((user, &value)) = dual
                .lambdas
                .iter()
                .enumerate()
                .find(|(_, &l)| !(l >= LAMBDA_FLOOR))
            {
                return Err(LearningError::LambdaUnderflow { user, value });
            }
            Ok(ErgodicRates::Rates(
                dual.lambdas.iter().map(|l| 1.0 / l).collect(),
            ))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimalState {
    pub targets: Vec<f64>,
    /// `x*(lambda)`; `None` under weighted sumrate.
    pub rates_ergodic: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub lambdas: Vec<f64>,
    pub mu: f64,
}

/// Everything observed and updated in one iteration.
///
/// `primal.rates_ergodic` is the `x*(lambda)` used during the iteration
/// (computed from the previous multipliers); targets and duals are the
/// updated values.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub index: u64,
    pub gains: Vec<f64>,
    pub powers: Vec<f64>,
    pub rates: Vec<f64>,
    pub primal: PrimalState,
    pub dual: DualState,
}

impl IterationRecord {
    pub fn total_power(&self) -> f64 {
        self.powers.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub network: NetworkConfig,
    pub run: RunConfig,
    pub seed: u64,
    pub initial_primal: PrimalState,
    pub initial_dual: DualState,
    pub records: Vec<IterationRecord>,
}

impl Trajectory {
    pub fn user_count(&self) -> usize {
        self.network.user_count()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records left after the configured burn-in.
    pub fn post_burn_in(&self, fraction: f64) -> &[IterationRecord] {
        &self.records[crate::config::burn_in_records(self.records.len(), fraction)..]
    }

    /// Keeps every `factor`-th record (the `factor`-th, `2 factor`-th, ...).
    pub fn thinned(&self, factor: usize) -> Trajectory {
        let factor = factor.max(1);
        Trajectory {
            records: self
                .records
                .iter()
                .skip(factor - 1)
                .step_by(factor)
                .cloned()
                .collect(),
            ..self.clone()
        }
    }

    pub fn csv_header(user_count: usize) -> Vec<String> {
        let mut header = vec!["iter".to_string()];
        for prefix in ["h", "p", "r", "t", "lambda"] {
            header.extend((1..=user_count).map(|i| format!("{prefix}_{i}")));
        }
        header.push("mu".to_string());
        header
    }

    /// Writes `iter, h_*, p_*, r_*, t_*, lambda_*, mu`, one row per kept
    /// record. Floats use shortest round-trip formatting.
    pub fn write_csv<W: Write>(&self, writer: W, thinning: usize) -> Result<(), csv::Error> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(Self::csv_header(self.user_count()))?;
        for rec in self
            .records
            .iter()
            .skip(thinning.max(1) - 1)
            .step_by(thinning.max(1))
        {
            let mut row = vec![rec.index.to_string()];
            for column in [
                &rec.gains,
                &rec.powers,
                &rec.rates,
                &rec.primal.targets,
                &rec.dual.lambdas,
            ] {
                row.extend(column.iter().map(|v| v.to_string()));
            }
            row.push(rec.dual.mu.to_string());
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Stateful learner; [`TailWaterfilling::step`] runs one iteration.
#[derive(Debug, Clone)]
pub struct TailWaterfilling {
    network: NetworkConfig,
    run: RunConfig,
    alphas: Vec<f64>,
    kink: KinkSelection,
    primal: PrimalState,
    dual: DualState,
    initial_primal: PrimalState,
    initial_dual: DualState,
    iteration: u64,
}

impl TailWaterfilling {
    /// Expects configs that passed [`crate::config::validate_config`].
    pub fn new(network: NetworkConfig, run: RunConfig) -> Result<Self, LearningError> {
        let n = network.user_count();
        let lambdas = match network.utility {
            Utility::WeightedSumrate => network.weights(),
            Utility::ProportionalFairness => vec![run.initial_lambda(n); n],
        };
        let dual = DualState {
            lambdas,
            mu: run.init_mu,
        };
        let alphas = match run.mode {
            RunMode::RiskAware => network.confidences(),
            RunMode::RiskNeutral => vec![1.0; n],
        };
        let rates_ergodic = match utility_x_argmax(network.utility, &dual, &network.weights())? {
            ErgodicRates::Rates(x) => Some(x),
            ErgodicRates::Eliminated => None,
        };
        let primal = PrimalState {
            targets: vec![run.init_t; n],
            rates_ergodic,
        };
        Ok(TailWaterfilling {
            kink: KinkSelection(run.kink_selection),
            alphas,
            initial_primal: primal.clone(),
            initial_dual: dual.clone(),
            primal,
            dual,
            network,
            run,
            iteration: 0,
        })
    }

    pub fn primal(&self) -> &PrimalState {
        &self.primal
    }

    pub fn dual(&self) -> &DualState {
        &self.dual
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Confidence levels in effect (all ones in risk-neutral mode).
    pub fn effective_alphas(&self) -> &[f64] {
        &self.alphas
    }

    fn power_for(&self, inputs: &PolicyInputs) -> Result<PowerDecision, PolicyError> {
        let mut decision = match self.run.mode {
            RunMode::RiskAware => policy::decide(inputs)?,
            RunMode::RiskNeutral => PowerDecision {
                power: policy::riskneutral_power(
                    inputs.gain,
                    inputs.lambda,
                    inputs.mu,
                    inputs.noise_variance,
                )?,
                branch: policy::Branch::Waterlevel,
            },
        };
        if let Some(cap) = self.run.instantaneous_power_cap {
            if decision.power > cap {
                // A capped rate-target power no longer meets the target.
                decision = PowerDecision {
                    power: cap,
                    branch: policy::Branch::Waterlevel,
                };
            }
        }
        Ok(decision)
    }

    /// One iteration on the observed realization.
    pub fn step(&mut self, fading: &FadingSample) -> Result<IterationRecord, LearningError> {
        let n = self.network.user_count();
        if fading.len() != n {
            return Err(LearningError::GainCount {
                expected: n,
                found: fading.len(),
            });
        }
        let iteration = self.iteration + 1;
        let weights = self.network.weights();
        let x_star = utility_x_argmax(self.network.utility, &self.dual, &weights)?;

        let mut powers = Vec::with_capacity(n);
        let mut rates = Vec::with_capacity(n);
        let mut targets = self.primal.targets.clone();
        for (i, user) in self.network.users.iter().enumerate() {
            let inputs = PolicyInputs {
                gain: fading.gains[i],
                target: self.primal.targets[i],
                lambda: self.dual.lambdas[i],
                mu: self.dual.mu,
                alpha: self.alphas[i],
                noise_variance: user.noise_variance,
            };
            let decision = self
                .power_for(&inputs)
                .map_err(|source| LearningError::Policy { iteration, source })?;
            let rate = instantaneous_rate(inputs.gain, decision.power, inputs.noise_variance);
            if self.run.mode == RunMode::RiskAware {
                let g = subgradient_for(&inputs, &decision, rate, self.kink);
                targets[i] = update_t(inputs.target, g, self.run.step_t);
            }
            powers.push(decision.power);
            rates.push(rate);
        }

        let total_power: f64 = powers.iter().sum();
        let mu = update_mu(
            self.dual.mu,
            total_power,
            self.network.power_budget,
            self.run.step_mu,
        );
        let lambdas = match &x_star {
            ErgodicRates::Eliminated => self.dual.lambdas.clone(),
            ErgodicRates::Rates(x) => (0..n)
                .map(|i| {
                    let next = match self.run.mode {
                        RunMode::RiskAware => update_lambda(
                            self.dual.lambdas[i],
                            x[i],
                            self.primal.targets[i],
                            rates[i],
                            self.alphas[i],
                            self.run.step_lambda,
                        ),
                        RunMode::RiskNeutral => update_lambda_neutral(
                            self.dual.lambdas[i],
                            x[i],
                            rates[i],
                            self.run.step_lambda,
                        ),
                    };
                    next.max(LAMBDA_FLOOR)
                })
                .collect(),
        };

        let finite = mu.is_finite()
            && lambdas.iter().all(|v| v.is_finite())
            && targets.iter().all(|v| v.is_finite())
            && powers.iter().all(|v| v.is_finite())
            && rates.iter().all(|v| v.is_finite());
        if !finite {
            return Err(LearningError::NonFiniteState { iteration });
        }

        self.iteration = iteration;
        self.primal = PrimalState {
            targets,
            rates_ergodic: match x_star {
                ErgodicRates::Rates(x) => Some(x),
                ErgodicRates::Eliminated => None,
            },
        };
        self.dual = DualState { lambdas, mu };
        Ok(IterationRecord {
            index: iteration,
            gains: fading.gains.clone(),
            powers,
            rates,
            primal: self.primal.clone(),
            dual: self.dual.clone(),
        })
    }

    /// Pulls one realization from `source` and steps.
    pub fn step_from(
        &mut self,
        source: &mut dyn FadingSource,
    ) -> Result<IterationRecord, LearningError> {
        let fading = source
            .next_sample(&self.network)
            .map_err(|source| LearningError::Fading {
                iteration: self.iteration + 1,
                source,
            })?;
        self.step(&fading)
    }

    pub fn into_trajectory(self, records: Vec<IterationRecord>) -> Trajectory {
        Trajectory {
            seed: self.run.seed,
            network: self.network,
            run: self.run,
            initial_primal: self.initial_primal,
            initial_dual: self.initial_dual,
            records,
        }
    }
}

/// Runs the configured number of iterations on realizations from `source`.
pub fn run_with_source(
    network: &NetworkConfig,
    run: &RunConfig,
    source: &mut dyn FadingSource,
) -> Result<Trajectory, LearningError> {
    let mut learner = TailWaterfilling::new(network.clone(), run.clone())?;
    let mut records = Vec::with_capacity(run.iterations as usize);
    for _ in 0..run.iterations {
        records.push(learner.step_from(source)?);
    }
    Ok(learner.into_trajectory(records))
}

/// Runs on Rayleigh fading sampled from `run.seed`.
pub fn run_tail_waterfilling(
    network: &NetworkConfig,
    run: &RunConfig,
) -> Result<Trajectory, LearningError> {
    let mut rng = RngState::new(run.seed, network.user_count());
    run_with_source(network, run, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::UserConfig;
    use proptest::prelude::*;

    fn fig3(gain: f64) -> PolicyInputs {
        PolicyInputs {
            gain,
            target: 2.9,
            lambda: 0.33,
            mu: 0.07,
            alpha: 0.53,
            noise_variance: 1.0,
        }
    }

    fn network(utility: Utility, alpha: f64) -> NetworkConfig {
        NetworkConfig {
            users: [1.0, 2.0, 1.5]
                .iter()
                .map(|&noise_variance| UserConfig {
                    noise_variance,
                    confidence: alpha,
                    fading_scale: 1.0,
                    weight: 1.0 / 3.0,
                })
                .collect(),
            power_budget: 10.0,
            utility,
        }
    }

    #[test]
    fn rate_examples() {
        assert_eq!(instantaneous_rate(3.0, 0.0, 1.0), 0.0);
        assert!((instantaneous_rate(1.0, std::f64::consts::E - 1.0, 1.0) - 1.0).abs() < 1e-15);
        let p = policy::optimal_power(&fig3(4.0)).unwrap();
        assert!((instantaneous_rate(4.0, p, 1.0) - 2.9).abs() < 1e-12);
    }

    #[test]
    fn subgradient_examples() {
        let kink = KinkSelection::default();
        let negative = PolicyInputs {
            target: -0.5,
            mu: 0.0,
            ..fig3(1.0)
        };
        assert_eq!(t_subgradient(&negative, kink).unwrap(), 0.33);

        let upper = t_subgradient(&fig3(1.0), kink).unwrap();
        assert!((upper - (-0.29264)).abs() < 1e-5);

        assert_eq!(t_subgradient(&fig3(4.0), kink).unwrap(), 0.33);
        let one = t_subgradient(&fig3(4.0), KinkSelection(1.0)).unwrap();
        assert!((one - 0.33 * (1.0 - 1.0 / 0.53)).abs() < 1e-15);
    }

    #[test]
    fn heaviside_selection() {
        let k = KinkSelection(0.25);
        assert_eq!(k.heaviside(1e-300), 1.0);
        assert_eq!(k.heaviside(-1e-300), 0.0);
        assert_eq!(k.heaviside(0.0), 0.25);
    }

    #[test]
    fn target_update_examples() {
        assert!((update_t(2.9, -0.29264, 1e-3) - 2.89971).abs() < 1e-5);
        assert_eq!(update_t(1.7, 0.0, 1e-3), 1.7);
        assert!((update_t(0.0, 0.33, 1e-3) - 0.00033).abs() < 1e-15);
    }

    #[test]
    fn mu_update_examples() {
        assert!((update_mu(0.07, 12.0, 10.0, 1e-4) - 0.0702).abs() < 1e-12);
        assert_eq!(update_mu(0.07, 10.0, 10.0, 1e-4), 0.07);
        assert_eq!(update_mu(0.0, 5.0, 10.0, 1e-4), 0.0);
    }

    #[test]
    fn lambda_update_examples() {
        assert_eq!(update_lambda(0.5, 2.0, 2.0, 2.5, 0.5, 1e-4), 0.5);
        assert!((update_lambda(0.5, 1.0, 2.0, 1.0, 0.5, 1e-4) - 0.5001).abs() < 1e-12);
        assert_eq!(update_lambda(1e-5, 0.0, 5.0, 5.0, 0.5, 1.0), 0.0);
    }

    #[test]
    fn ergodic_rate_examples() {
        let pf = |lambdas: Vec<f64>| {
            utility_x_argmax(
                Utility::ProportionalFairness,
                &DualState { lambdas, mu: 0.1 },
                &[],
            )
        };
        assert_eq!(
            pf(vec![0.5, 0.25]).unwrap(),
            ErgodicRates::Rates(vec![2.0, 4.0])
        );
        assert_eq!(
            pf(vec![1.0, 1.0, 1.0]).unwrap(),
            ErgodicRates::Rates(vec![1.0, 1.0, 1.0])
        );
        assert!(matches!(
            pf(vec![1.0, 1e-9]),
            Err(LearningError::LambdaUnderflow { user: 1, .. })
        ));

        let w = vec![1.0 / 3.0; 3];
        let sumrate = utility_x_argmax(
            Utility::WeightedSumrate,
            &DualState {
                lambdas: w.clone(),
                mu: 0.1,
            },
            &w,
        );
        assert_eq!(sumrate.unwrap(), ErgodicRates::Eliminated);
    }

    #[test]
    fn zero_iterations_echo_initial_state() {
        let run = RunConfig::new(0, 1e-3, 1e-4, 1e-4, 1);
        let traj = run_tail_waterfilling(&network(Utility::WeightedSumrate, 0.53), &run).unwrap();
        assert!(traj.is_empty());
        assert_eq!(traj.initial_primal.targets, vec![1.0; 3]);
        assert_eq!(
            traj.initial_dual,
            DualState {
                lambdas: vec![1.0 / 3.0; 3],
                mu: 0.1
            }
        );
    }

    #[test]
    fn pf_initial_lambda_below_floor_fails() {
        let mut run = RunConfig::new(5, 1e-3, 1e-4, 1e-4, 1);
        run.init_lambda = Some(0.0);
        let err =
            run_tail_waterfilling(&network(Utility::ProportionalFairness, 0.51), &run).unwrap_err();
        assert!(matches!(
            err,
            LearningError::LambdaUnderflow { user: 0, .. }
        ));
    }

    #[test]
    fn records_are_contiguous_and_consistent() {
        let net = network(Utility::ProportionalFairness, 0.51);
        let run = RunConfig::new(500, 1e-3, 1e-4, 1e-4, 9);
        let traj = run_tail_waterfilling(&net, &run).unwrap();
        let mut prev_dual = traj.initial_dual.clone();
        for (k, rec) in traj.records.iter().enumerate() {
            assert_eq!(rec.index, k as u64 + 1);
            for i in 0..3 {
                let r =
                    instantaneous_rate(rec.gains[i], rec.powers[i], net.users[i].noise_variance);
                assert_eq!(r.to_bits(), rec.rates[i].to_bits());
                let x = rec.primal.rates_ergodic.as_ref().unwrap()[i];
                assert!((x * prev_dual.lambdas[i] - 1.0).abs() < 1e-12);
            }
            assert!(rec.dual.mu >= 0.0 && rec.dual.lambdas.iter().all(|&l| l >= 0.0));
            prev_dual = rec.dual.clone();
        }
    }

    #[test]
    fn first_iteration_uses_only_initial_state() {
        let net = network(Utility::WeightedSumrate, 0.53);
        let run = RunConfig::new(1, 1e-3, 1e-4, 1e-4, 4);
        let traj = run_tail_waterfilling(&net, &run).unwrap();
        let rec = &traj.records[0];
        let mut total = 0.0;
        for i in 0..3 {
            let inputs = PolicyInputs {
                gain: rec.gains[i],
                target: 1.0,
                lambda: 1.0 / 3.0,
                mu: 0.1,
                alpha: 0.53,
                noise_variance: net.users[i].noise_variance,
            };
            let p = policy::optimal_power(&inputs).unwrap();
            assert_eq!(p, rec.powers[i]);
            let g = t_subgradient(&inputs, KinkSelection::default()).unwrap();
            assert_eq!(rec.primal.targets[i], update_t(1.0, g, 1e-3));
            total += p;
        }
        assert_eq!(rec.dual.mu, update_mu(0.1, total, 10.0, 1e-4));
        assert_eq!(rec.dual.lambdas, vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn power_cap_applies() {
        let net = network(Utility::WeightedSumrate, 0.53);
        let mut run = RunConfig::new(200, 1e-3, 1e-4, 1e-4, 2);
        run.instantaneous_power_cap = Some(0.5);
        let traj = run_tail_waterfilling(&net, &run).unwrap();
        assert!(traj
            .records
            .iter()
            .flat_map(|r| &r.powers)
            .all(|&p| p <= 0.5));
    }

    #[test]
    fn neutral_mode_keeps_targets() {
        let net = network(Utility::WeightedSumrate, 0.53);
        let run = RunConfig::new(100, 1e-3, 1e-4, 1e-4, 2).with_mode(RunMode::RiskNeutral);
        let traj = run_tail_waterfilling(&net, &run).unwrap();
        assert!(traj
            .records
            .iter()
            .all(|r| r.primal.targets == vec![1.0; 3]));
        for rec in &traj.records {
            for i in 0..3 {
                let lambda = 1.0 / 3.0;
                let mu_prev = if rec.index == 1 {
                    0.1
                } else {
                    traj.records[rec.index as usize - 2].dual.mu
                };
                let p = policy::riskneutral_power(
                    rec.gains[i],
                    lambda,
                    mu_prev,
                    net.users[i].noise_variance,
                )
                .unwrap();
                assert_eq!(p, rec.powers[i]);
            }
        }
    }

    #[test]
    fn neutral_matches_frozen_unit_confidence() {
        let mut net = network(Utility::WeightedSumrate, 1.0);
        net.users.iter_mut().for_each(|u| u.confidence = 1.0);
        let mut aware = RunConfig::new(2000, 1e-3, 1e-4, 1e-4, 13);
        aware.init_t = 50.0;
        let neutral = RunConfig {
            mode: RunMode::RiskNeutral,
            ..aware.clone()
        };
        let a = run_tail_waterfilling(&net, &aware).unwrap();
        let b = run_tail_waterfilling(&net, &neutral).unwrap();
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.powers, rb.powers);
            assert_eq!(ra.primal.targets, vec![50.0; 3]);
        }
    }

    #[test]
    fn csv_layout() {
        let net = network(Utility::WeightedSumrate, 0.53);
        let traj = run_tail_waterfilling(&net, &RunConfig::new(10, 1e-3, 1e-4, 1e-4, 2)).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf, 3).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "iter,h_1,h_2,h_3,p_1,p_2,p_3,r_1,r_2,r_3,t_1,t_2,t_3,lambda_1,lambda_2,lambda_3,mu"
        );
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("3,"));
        assert!(lines[3].starts_with("9,"));
        let mu: f64 = lines[1].rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(mu, traj.records[2].dual.mu);
    }

    // The t-objective lambda t - mu p*(t) - (lambda/alpha)(t - r(p*(t)))_+ with p* re-optimized.
    fn t_objective(inputs: &PolicyInputs) -> f64 {
        let p = policy::optimal_power(inputs).unwrap();
        let r = instantaneous_rate(inputs.gain, p, inputs.noise_variance);
        inputs.lambda * inputs.target
            - inputs.mu * p
            - inputs.lambda / inputs.alpha * (inputs.target - r).max(0.0)
    }

    fn inputs_strategy() -> impl Strategy<Value = PolicyInputs> {
        (
            -2.0f64..1.0,
            -2.0f64..1.0,
            0.0f64..5.0,
            1usize..=10,
            0.05f64..5.0,
            0.25f64..4.0,
        )
            .prop_map(|(ll, lm, target, a, gain, noise_variance)| PolicyInputs {
                gain,
                target,
                lambda: 10f64.powf(ll),
                mu: 10f64.powf(lm),
                alpha: a as f64 / 10.0,
                noise_variance,
            })
    }

    proptest! {
        #[test]
        fn subgradient_in_envelope(inputs in inputs_strategy(), kink in 0.0f64..=1.0) {
            let g = t_subgradient(&inputs, KinkSelection(kink)).unwrap();
            let lo = inputs.lambda * (1.0 - 1.0 / inputs.alpha);
            prop_assert!(g >= lo - 1e-12 && g <= inputs.lambda + 1e-12);
        }

        #[test]
        fn subgradient_matches_finite_difference(inputs in inputs_strategy()) {
            // Only where the branch and the sign of t - r are locally constant.
            let h = 1e-5;
            let at = |t: f64| PolicyInputs { target: t, ..inputs };
            let branch = |t: f64| policy::decide(&at(t)).unwrap().branch;
            let crossover = policy::crossover_gain(&inputs);
            prop_assume!((inputs.gain - crossover).abs() > 1e-2 * crossover);
            prop_assume!(branch(inputs.target - 2.0 * h) == branch(inputs.target + 2.0 * h));
            let d = policy::decide(&inputs).unwrap();
            // The rate-target branch sits on the kink: the objective is not differentiable there.
            prop_assume!(!d.meets_target_exactly());
            let r = instantaneous_rate(inputs.gain, d.power, inputs.noise_variance);
            prop_assume!((inputs.target - r).abs() > 1e-3);
            let fd = (t_objective(&at(inputs.target + h)) - t_objective(&at(inputs.target - h))) / (2.0 * h);
            let g = t_subgradient(&inputs, KinkSelection::default()).unwrap();
            prop_assert!((fd - g).abs() <= 1e-4 * (1.0 + g.abs()), "fd {} vs g {}", fd, g);
        }
    }
}
