//! Scenario and run configuration.
//!
//! A [`NetworkConfig`] describes the static scenario (users, noise levels,
//! confidence levels, budget, utility). A [`RunConfig`] describes one learning
//! run (iterations, step sizes, seed, initial iterates, mode). Both are plain
//! values deserialized from JSON with `lower_snake_case` field names; unknown
//! fields are rejected.
//!
//! [`validate_config`] checks every invariant at once and reports all
//! violations, so a broken experiment file can be fixed in a single pass.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Default initial CV@R target (nats), broadcast to every user.
pub const DEFAULT_INIT_TARGET: f64 = 1.0;
/// Default initial power multiplier.
pub const DEFAULT_INIT_MU: f64 = 0.1;
/// Default fraction of iterations discarded before statistics are taken.
pub const DEFAULT_BURN_IN_FRACTION: f64 = 0.2;

/// Per-user link description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserConfig {
    /// Receiver noise variance (linear power units).
    pub noise_variance: f64,
    /// CV@R confidence level in (0, 1]; 1 is risk neutral.
    pub confidence: f64,
    /// Rayleigh scale of the channel gain.
    pub fading_scale: f64,
    /// Utility weight, used by the weighted-sumrate utility only.
    #[serde(default)]
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Utility {
    WeightedSumrate,
    ProportionalFairness,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub users: Vec<UserConfig>,
    /// Total mean power budget across users.
    pub power_budget: f64,
    pub utility: Utility,
}

impl NetworkConfig {
    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.users.iter().map(|u| u.weight).collect()
    }

    pub fn confidences(&self) -> Vec<f64> {
        self.users.iter().map(|u| u.confidence).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    /// Tail waterfilling: CV@R-constrained rates, learned targets.
    #[default]
    RiskAware,
    /// Classical stochastic waterfilling: every confidence forced to 1, no targets.
    RiskNeutral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub iterations: u64,
    #[serde(default = "default_burn_in")]
    pub burn_in_fraction: f64,
    pub step_t: f64,
    pub step_mu: f64,
    pub step_lambda: f64,
    pub seed: u64,
    #[serde(default = "default_init_t")]
    pub init_t: f64,
    #[serde(default = "default_init_mu")]
    pub init_mu: f64,
    /// Initial rate multiplier broadcast to every user; `None` means `1/n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_lambda: Option<f64>,
    #[serde(default)]
    pub mode: RunMode,
    /// Per-user cap applied after the closed-form policy; off by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instantaneous_power_cap: Option<f64>,
    /// Value taken by the Heaviside step at zero in the target subgradient.
    #[serde(default)]
    pub kink_selection: f64,
}

fn default_burn_in() -> f64 {
    DEFAULT_BURN_IN_FRACTION
}

fn default_init_t() -> f64 {
    DEFAULT_INIT_TARGET
}

fn default_init_mu() -> f64 {
    DEFAULT_INIT_MU
}

impl RunConfig {
    /// A run with the default initial iterates and burn-in.
    pub fn new(iterations: u64, step_t: f64, step_mu: f64, step_lambda: f64, seed: u64) -> Self {
        RunConfig {
            iterations,
            burn_in_fraction: DEFAULT_BURN_IN_FRACTION,
            step_t,
            step_mu,
            step_lambda,
            seed,
            init_t: DEFAULT_INIT_TARGET,
            init_mu: DEFAULT_INIT_MU,
            init_lambda: None,
            mode: RunMode::RiskAware,
            instantaneous_power_cap: None,
            kink_selection: 0.0,
        }
    }

    pub fn with_mode(mut self, mode: RunMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn initial_lambda(&self, user_count: usize) -> f64 {
        self.init_lambda.unwrap_or(1.0 / user_count.max(1) as f64)
    }

    /// Number of leading records dropped by the burn-in window.
    pub fn burn_in_records(&self, record_count: usize) -> usize {
        burn_in_records(record_count, self.burn_in_fraction)
    }
}

pub fn burn_in_records(record_count: usize, fraction: f64) -> usize {
    ((record_count as f64) * fraction).floor() as usize
}

/// One violated invariant. User indices are zero-based.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("network has no users")]
    EmptyNetwork,
    #[error("users[{user}].noise_variance must be > 0 (got {value})")]
    NonPositiveNoise { user: usize, value: f64 },
    #[error("users[{user}].confidence must lie in (0, 1] (got {value})")]
    ConfidenceOutOfRange { user: usize, value: f64 },
    #[error("users[{user}].fading_scale must be > 0 (got {value})")]
    NonPositiveFadingScale { user: usize, value: f64 },
    #[error("users[{user}].weight must be >= 0 (got {value})")]
    NegativeWeight { user: usize, value: f64 },
    #[error("weighted_sumrate needs at least one positive weight")]
    NoPositiveWeight,
    #[error("power_budget must be > 0 (got {value})")]
    NonPositiveBudget { value: f64 },
    #[error("{field} must be > 0 (got {value})")]
    NonPositiveStepsize { field: &'static str, value: f64 },
    #[error("{field} must be >= 0 (got {value})")]
    NegativeInitialDual { field: &'static str, value: f64 },
    #[error("init_t must be finite (got {value})")]
    NonFiniteInitialTarget { value: f64 },
    #[error("burn_in_fraction must lie in [0, 1) (got {value})")]
    BurnInOutOfRange { value: f64 },
    #[error("instantaneous_power_cap must be > 0 (got {value})")]
    NonPositivePowerCap { value: f64 },
    #[error("kink_selection must lie in [0, 1] (got {value})")]
    KinkSelectionOutOfRange { value: f64 },
}

impl ConfigError {
    /// Stable variant name, used in CLI reports.
    pub fn kind(&self) -> &'static str {
        match self {
            ConfigError::EmptyNetwork => "EmptyNetwork",
            ConfigError::NonPositiveNoise { .. } => "NonPositiveNoise",
            ConfigError::ConfidenceOutOfRange { .. } => "ConfidenceOutOfRange",
            ConfigError::NonPositiveFadingScale { .. } => "NonPositiveFadingScale",
            ConfigError::NegativeWeight { .. } => "NegativeWeight",
            ConfigError::NoPositiveWeight => "NoPositiveWeight",
            ConfigError::NonPositiveBudget { .. } => "NonPositiveBudget",
            ConfigError::NonPositiveStepsize { .. } => "NonPositiveStepsize",
            ConfigError::NegativeInitialDual { .. } => "NegativeInitialDual",
            ConfigError::NonFiniteInitialTarget { .. } => "NonFiniteInitialTarget",
            ConfigError::BurnInOutOfRange { .. } => "BurnInOutOfRange",
            ConfigError::NonPositivePowerCap { .. } => "NonPositivePowerCap",
            ConfigError::KinkSelectionOutOfRange { .. } => "KinkSelectionOutOfRange",
        }
    }
}

/// Every violation found by [`validate_config`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationErrors(pub Vec<ConfigError>);

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} configuration error(s):", self.0.len())?;
        for err in &self.0 {
            writeln!(f, "  {}: {}", err.kind(), err)?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationErrors {}

// NaN and infinities fail both checks.
fn positive(x: f64) -> bool {
    x > 0.0 && x.is_finite()
}

fn nonnegative(x: f64) -> bool {
    x >= 0.0 && x.is_finite()
}

pub fn network_errors(network: &NetworkConfig) -> Vec<ConfigError> {
    let mut errors = Vec::new();
    if network.users.is_empty() {
        errors.push(ConfigError::EmptyNetwork);
    }
    for (user, cfg) in network.users.iter().enumerate() {
        if !positive(cfg.noise_variance) {
            errors.push(ConfigError::NonPositiveNoise {
                user,
                value: cfg.noise_variance,
            });
        }
        if !(cfg.confidence > 0.0 && cfg.confidence <= 1.0) {
            errors.push(ConfigError::ConfidenceOutOfRange {
                user,
                value: cfg.confidence,
            });
        }
        if !positive(cfg.fading_scale) {
            errors.push(ConfigError::NonPositiveFadingScale {
                user,
                value: cfg.fading_scale,
            });
        }
        if !nonnegative(cfg.weight) {
            errors.push(ConfigError::NegativeWeight {
                user,
                value: cfg.weight,
            });
        }
    }
    if network.utility == Utility::WeightedSumrate
        && !network.users.is_empty()
        && !network.users.iter().any(|u| u.weight > 0.0)
    {
        errors.push(ConfigError::NoPositiveWeight);
    }
    if !positive(network.power_budget) {
        errors.push(ConfigError::NonPositiveBudget {
            value: network.power_budget,
        });
    }
    errors
}

pub fn run_errors(run: &RunConfig) -> Vec<ConfigError> {
    let mut errors = Vec::new();
    for (field, value) in [
        ("step_t", run.step_t),
        ("step_mu", run.step_mu),
        ("step_lambda", run.step_lambda),
    ] {
        if !positive(value) {
            errors.push(ConfigError::NonPositiveStepsize { field, value });
        }
    }
    if !nonnegative(run.init_mu) {
        errors.push(ConfigError::NegativeInitialDual {
            field: "init_mu",
            value: run.init_mu,
        });
    }
    if let Some(value) = run.init_lambda {
        if !nonnegative(value) {
            errors.push(ConfigError::NegativeInitialDual {
                field: "init_lambda",
                value,
            });
        }
    }
    if !run.init_t.is_finite() {
        errors.push(ConfigError::NonFiniteInitialTarget { value: run.init_t });
    }
    if !(run.burn_in_fraction >= 0.0 && run.burn_in_fraction < 1.0) {
        errors.push(ConfigError::BurnInOutOfRange {
            value: run.burn_in_fraction,
        });
    }
    if let Some(value) = run.instantaneous_power_cap {
        if !positive(value) {
            errors.push(ConfigError::NonPositivePowerCap { value });
        }
    }
    if !(run.kink_selection >= 0.0 && run.kink_selection <= 1.0) {
        errors.push(ConfigError::KinkSelectionOutOfRange {
            value: run.kink_selection,
        });
    }
    errors
}

/// Returns the pair unchanged iff every invariant holds, otherwise all violations.
pub fn validate_config(
    network: NetworkConfig,
    run: RunConfig,
) -> Result<(NetworkConfig, RunConfig), ValidationErrors> {
    let mut errors = network_errors(&network);
    errors.extend(run_errors(&run));
    if errors.is_empty() {
        Ok((network, run))
    } else {
        Err(ValidationErrors(errors))
    }
}
