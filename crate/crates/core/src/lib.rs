//! Risk-aware power allocation for multi-user point-to-point fading channels.
//!
//! The rate of each user is constrained in CV@R (the mean of its worst
//! `alpha`-fraction of outcomes) instead of in expectation. The optimal
//! per-realization policy is a two-branch "tail waterfilling" rule
//! ([`policy`]); its multipliers and rate targets are learned online by a
//! stochastic primal-dual recursion ([`learning`]).
//!
//! Modules:
//!
//! * [`config`]: scenario and run configuration, validation.
//! * [`channel`]: seedable Rayleigh fading and CSV replay.
//! * [`risk`]: exact empirical CV@R / V@R.
//! * [`policy`]: closed-form policy, waterfilling baseline, grid oracle.
//! * [`learning`]: the primal-dual driver and trajectories.
//! * [`metrics`]: histograms, outage curves, summaries, comparisons.
//! * [`oracle`]: randomized certification of the policy.

pub mod channel;
pub mod config;
pub mod learning;
pub mod metrics;
pub mod oracle;
pub mod policy;
pub mod risk;

pub use channel::{sample_fading, FadingSample, FadingSource, ReplayFading, RngState};
pub use config::{validate_config, NetworkConfig, RunConfig, RunMode, UserConfig, Utility};
pub use learning::{
    run_tail_waterfilling, run_with_source, DualState, IterationRecord, PrimalState,
    TailWaterfilling, Trajectory,
};
pub use metrics::{summarize, OutageCurve, RateHistogram, SummaryStats};
pub use policy::{optimal_power, riskneutral_power, PolicyInputs};
pub use risk::{cvar_lower_reward, cvar_upper, empirical_var};
