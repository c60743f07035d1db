//! Randomized certification of the closed-form policy.
//!
//! Draws random valid [`PolicyInputs`] and checks, per tuple:
//!
//! * grid equivalence: the closed form lies within two grid steps of the
//!   exhaustive maximizer of the subproblem objective;
//! * branch continuity: both branch formulas agree at the crossover gain;
//! * waterfilling reduction: with `alpha = 1`, `t = 50` the policy equals
//!   classical waterfilling bit for bit.

use crate::policy::{self, PolicyInputs};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub const GRID_P_MAX: f64 = 20.0;
pub const GRID_STEPS: usize = 200_000;
pub const CONTINUITY_TOLERANCE: f64 = 1e-9;
pub const REDUCTION_TARGET: f64 = 50.0;

/// Policy evaluated by the suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Candidate {
    #[default]
    ClosedForm,
    /// The closed form with the branch threshold scaled by 2, for checking
    /// that the suite notices a wrong policy.
    CorruptedBranch,
}

impl Candidate {
    pub fn power(self, inputs: &PolicyInputs) -> f64 {
        match self {
            Candidate::ClosedForm => policy::optimal_power(inputs).expect("valid inputs"),
            Candidate::CorruptedBranch => {
                let test = inputs.lambda / (2.0 * inputs.mu * inputs.alpha * inputs.target.exp())
                    - inputs.noise_variance / inputs.gain;
                if test < 0.0 {
                    policy::upper_branch_power(inputs)
                } else {
                    policy::lower_branch_power(inputs).max(0.0)
                }
            }
        }
    }
}

/// Random tuple from the certification distribution: log-uniform `lambda`,
/// `mu` in [1e-3, 10], `t` in [0, 5], `alpha` in {0.1, ..., 1}, `h` in
/// [0.05, 5], `s2` in [0.25, 4].
pub fn random_inputs<R: Rng>(rng: &mut R) -> PolicyInputs {
    let log_uniform = |rng: &mut R| 10f64.powf(rng.gen_range(-3.0..=1.0));
    PolicyInputs {
        lambda: log_uniform(rng),
        mu: log_uniform(rng),
        target: rng.gen_range(0.0..=5.0),
        alpha: rng.gen_range(1..=10) as f64 / 10.0,
        gain: rng.gen_range(0.05..=5.0),
        noise_variance: rng.gen_range(0.25..=4.0),
    }
}

/// Draws tuples until one satisfies the grid precondition
/// `p_max >= 2 (p* + 1)`, so the true maximizer lies well inside the grid.
pub fn random_grid_inputs<R: Rng>(rng: &mut R, p_max: f64) -> PolicyInputs {
    loop {
        let inputs = random_inputs(rng);
        if p_max >= 2.0 * (policy::optimal_power(&inputs).expect("valid inputs") + 1.0) {
            return inputs;
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleFailure {
    pub check: &'static str,
    pub inputs: PolicyInputs,
    pub expected: f64,
    pub actual: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct OracleReport {
    pub tuples: usize,
    pub checks: usize,
    pub failures: Vec<OracleFailure>,
}

impl OracleReport {
    pub fn passed(&self) -> usize {
        self.checks - self.failures.len()
    }

    pub fn all_passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn check_grid(
    candidate: Candidate,
    inputs: &PolicyInputs,
    p_max: f64,
    steps: usize,
) -> Result<(), OracleFailure> {
    let actual = candidate.power(inputs);
    let expected = policy::grid_argmax_power(inputs, p_max, steps);
    if (actual - expected).abs() <= 2.0 * p_max / steps as f64 {
        Ok(())
    } else {
        Err(OracleFailure {
            check: "grid_equivalence",
            inputs: *inputs,
            expected,
            actual,
        })
    }
}

pub fn check_continuity(inputs: &PolicyInputs) -> Result<(), OracleFailure> {
    let at = PolicyInputs {
        gain: policy::crossover_gain(inputs),
        ..*inputs
    };
    let expected = policy::upper_branch_power(&at);
    let actual = policy::lower_branch_power(&at);
    if (expected - actual).abs() <= CONTINUITY_TOLERANCE {
        Ok(())
    } else {
        Err(OracleFailure {
            check: "branch_continuity",
            inputs: at,
            expected,
            actual,
        })
    }
}

pub fn check_reduction(candidate: Candidate, inputs: &PolicyInputs) -> Result<(), OracleFailure> {
    let neutral = PolicyInputs {
        alpha: 1.0,
        target: REDUCTION_TARGET,
        ..*inputs
    };
    let actual = candidate.power(&neutral);
    let expected =
        policy::riskneutral_power(inputs.gain, inputs.lambda, inputs.mu, inputs.noise_variance)
            .expect("mu > 0 in the certification distribution");
    if actual.to_bits() == expected.to_bits() {
        Ok(())
    } else {
        Err(OracleFailure {
            check: "waterfilling_reduction",
            inputs: neutral,
            expected,
            actual,
        })
    }
}

/// Runs all three checks on `count` tuples drawn from `seed`.
pub fn run_oracle_suite(count: usize, seed: u64, candidate: Candidate) -> OracleReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = OracleReport::default();
    for _ in 0..count {
        let inputs = random_grid_inputs(&mut rng, GRID_P_MAX);
        report.tuples += 1;
        for outcome in [
            check_grid(candidate, &inputs, GRID_P_MAX, GRID_STEPS),
            check_continuity(&inputs),
            check_reduction(candidate, &inputs),
        ] {
            report.checks += 1;
            if let Err(failure) = outcome {
                report.failures.push(failure);
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_suite() {
        let report = run_oracle_suite(0, 1, Candidate::ClosedForm);
        assert_eq!(report.checks, 0);
        assert!(report.all_passed());
    }

    #[test]
    fn small_suite_passes() {
        let report = run_oracle_suite(25, 11, Candidate::ClosedForm);
        assert_eq!(report.tuples, 25);
        assert_eq!(report.checks, 75);
        assert!(report.all_passed(), "{:?}", report.failures);
    }

    #[test]
    fn corrupted_branch_is_caught() {
        let report = run_oracle_suite(100, 11, Candidate::CorruptedBranch);
        assert!(report
            .failures
            .iter()
            .any(|f| f.check == "grid_equivalence"));
    }

    #[test]
    fn sampled_tuples_are_valid_and_inside_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let inputs = random_grid_inputs(&mut rng, GRID_P_MAX);
            assert!(inputs.is_valid());
            assert!(policy::optimal_power(&inputs).unwrap() <= GRID_P_MAX / 2.0 - 1.0);
        }
    }
}
