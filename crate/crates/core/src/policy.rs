//! Per-user power policies.
//!
//! Given a gain `h`, noise variance `s2`, CV@R target `t`, rate multiplier
//! `lambda`, power multiplier `mu` and confidence `alpha`, the risk-aware
//! policy maximizes
//!
//! ```text
//! J(p) = -mu p - (lambda / alpha) (t - ln(1 + h p / s2))_+      over p >= 0.
//! ```
//!
//! The maximizer has two regimes, separated at the crossover gain
//! `h* = s2 mu alpha e^t / lambda`:
//!
//! * below `h*` (waterlevel branch): `[lambda/(mu alpha) - s2/h]_+`, the rate
//!   stays under the target;
//! * at or above `h*` (rate-target branch): `s2 (e^t - 1) / h`, exactly the
//!   power that brings the rate up to `t`.
//!
//! With `alpha = 1` and `t -> inf` only the waterlevel branch survives and the
//! policy is classical waterfilling, [`riskneutral_power`].

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolicyError {
    #[error("mu = 0 with lambda = {lambda} > 0 leaves the waterlevel unbounded")]
    DegenerateDuals { lambda: f64 },
    #[error("policy evaluation produced a non-finite power ({power}) for {inputs:?}")]
    NonFinite { power: f64, inputs: PolicyInputs },
}

/// Operands of one user's policy subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyInputs {
    pub gain: f64,
    pub target: f64,
    pub lambda: f64,
    pub mu: f64,
    pub alpha: f64,
    pub noise_variance: f64,
}

impl PolicyInputs {
    pub fn is_valid(&self) -> bool {
        self.gain > 0.0
            && self.noise_variance > 0.0
            && self.alpha > 0.0
            && self.alpha <= 1.0
            && self.lambda >= 0.0
            && self.mu >= 0.0
            && self.target.is_finite()
    }

    /// `lambda / (mu alpha)`, the risk-aware waterlevel.
    pub fn waterlevel(&self) -> f64 {
        self.lambda / (self.mu * self.alpha)
    }
}

/// Which regime produced a power value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// `mu = lambda = 0`: nothing to gain, zero power.
    Idle,
    /// `[lambda/(mu alpha) - s2/h]_+`.
    Waterlevel,
    /// `s2 (e^t - 1)/h`, clamped at zero for negative targets.
    RateTarget,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerDecision {
    pub power: f64,
    pub branch: Branch,
}

impl PowerDecision {
    /// True when the rate equals the target by construction, which is the
    /// kink of the subproblem objective.
    pub fn meets_target_exactly(&self) -> bool {
        self.branch == Branch::RateTarget && self.power > 0.0
    }
}

/// Waterlevel branch evaluated unconditionally.
pub fn upper_branch_power(inputs: &PolicyInputs) -> f64 {
    (inputs.waterlevel() - inputs.noise_variance / inputs.gain).max(0.0)
}

/// Rate-target branch evaluated unconditionally (no clamping).
pub fn lower_branch_power(inputs: &PolicyInputs) -> f64 {
    inputs.noise_variance * inputs.target.exp_m1() / inputs.gain
}

/// Gain at which the two branches meet, `s2 mu alpha e^t / lambda`.
pub fn crossover_gain(inputs: &PolicyInputs) -> f64 {
    inputs.noise_variance * inputs.mu * inputs.alpha * inputs.target.exp() / inputs.lambda
}

/// Closed-form maximizer of the subproblem, with the branch that produced it.
pub fn decide(inputs: &PolicyInputs) -> Result<PowerDecision, PolicyError> {
    debug_assert!(inputs.is_valid(), "invalid policy inputs {inputs:?}");
    let decision = if inputs.lambda == 0.0 && inputs.mu == 0.0 {
        PowerDecision {
            power: 0.0,
            branch: Branch::Idle,
        }
    } else if inputs.mu == 0.0 {
        // Free power: reach the target exactly, the limit lambda/(mu alpha) -> inf.
        PowerDecision {
            power: lower_branch_power(inputs).max(0.0),
            branch: Branch::RateTarget,
        }
    } else {
        let test = inputs.lambda / (inputs.mu * inputs.alpha * inputs.target.exp())
            - inputs.noise_variance / inputs.gain;
        if test < 0.0 {
            PowerDecision {
                power: upper_branch_power(inputs),
                branch: Branch::Waterlevel,
            }
        } else {
            PowerDecision {
                power: lower_branch_power(inputs).max(0.0),
                branch: Branch::RateTarget,
            }
        }
    };
    if decision.power.is_finite() {
        Ok(decision)
    } else {
        Err(PolicyError::NonFinite {
            power: decision.power,
            inputs: *inputs,
        })
    }
}

/// Optimal risk-aware power for one user.
pub fn optimal_power(inputs: &PolicyInputs) -> Result<f64, PolicyError> {
    decide(inputs).map(|d| d.power)
}

/// Classical waterfilling `[lambda/mu - s2/h]_+`.
pub fn riskneutral_power(
    gain: f64,
    lambda: f64,
    mu: f64,
    noise_variance: f64,
) -> Result<f64, PolicyError> {
    if lambda == 0.0 {
        return Ok(0.0);
    }
    if mu == 0.0 {
        return Err(PolicyError::DegenerateDuals { lambda });
    }
    Ok((lambda / mu - noise_variance / gain).max(0.0))
}

/// `-mu p - (lambda/alpha) (t - ln(1 + h p / s2))_+`.
pub fn subproblem_objective(power: f64, inputs: &PolicyInputs) -> f64 {
    let rate = (inputs.gain * power / inputs.noise_variance).ln_1p();
    let shortfall = (inputs.target - rate).max(0.0);
    // Skip zero products so that 0 * inf never shows up as NaN.
    let cost = if inputs.mu == 0.0 {
        0.0
    } else {
        inputs.mu * power
    };
    let penalty = if inputs.lambda == 0.0 {
        0.0
    } else {
        inputs.lambda / inputs.alpha * shortfall
    };
    -cost - penalty
}

/// Exhaustive search over `{0, p_max/steps, ..., p_max}`; ties keep the smallest power.
pub fn grid_argmax_power(inputs: &PolicyInputs, p_max: f64, steps: usize) -> f64 {
    let mut best_power = 0.0;
    let mut best_value = subproblem_objective(0.0, inputs);
    for k in 1..=steps {
        let power = p_max * k as f64 / steps as f64;
        let value = subproblem_objective(power, inputs);
        if value > best_value {
            best_value = value;
            best_power = power;
        }
    }
    best_power
}
