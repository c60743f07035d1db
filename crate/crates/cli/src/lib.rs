//! Experiment harness behind the `tailfill` binary.
//!
//! An experiment spec is a single JSON document:
//!
//! ```json
//! {
//!   "network": { "users": [...], "power_budget": 10.0, "utility": "weighted_sumrate" },
//!   "run": { "iterations": 100000, "step_t": 0.001, "step_mu": 0.0001, "step_lambda": 0.0001, "seed": 7 },
//!   "output_dir": "out",
//!   "emit_trajectory": true,
//!   "comparison": { ... second run config ... },
//!   "replay_fading": "fading.csv"
//! }
//! ```
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime error, 3 oracle failure.

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use tailfill_core::channel::{self, FadingSource, ReplayFading, RngState};
use tailfill_core::config::{
    self, ConfigError, NetworkConfig, RunConfig, RunMode, Utility, ValidationErrors,
};
use tailfill_core::learning::{IterationRecord, LearningError, TailWaterfilling, Trajectory};
use tailfill_core::metrics::{self, MetricsError, SummaryStats};
use tailfill_core::oracle::{self, Candidate};

pub const THREADS_ENV: &str = "TAILFILL_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success = 0,
    ConfigError = 1,
    RuntimeError = 2,
    OracleFailure = 3,
}

impl From<Status> for ExitCode {
    fn from(status: Status) -> Self {
        ExitCode::from(status as u8)
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("tailfill-out")
}

fn default_thinning() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub network: NetworkConfig,
    pub run: RunConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub emit_trajectory: bool,
    /// Keep every k-th row of trajectory.csv.
    #[serde(default = "default_thinning")]
    pub trajectory_thinning: usize,
    /// Second run for `compare`; its seed is replaced by the primary seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<RunConfig>,
    /// CSV of gains to replay instead of sampling; relative to the spec file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay_fading: Option<PathBuf>,
}

#[derive(Debug)]
pub enum SpecError {
    Read(PathBuf, std::io::Error),
    Parse(PathBuf, serde_json::Error),
    Invalid(ValidationErrors),
}

impl std::fmt::Display for SpecError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SpecError::Read(path, e) => write!(f, "cannot read spec {}: {e}", path.display()),
            SpecError::Parse(path, e) => write!(f, "invalid spec {}: {e}", path.display()),
            SpecError::Invalid(errors) => write!(f, "{errors}"),
        }
    }
}

impl ExperimentSpec {
    pub fn load(path: &Path) -> Result<Self, SpecError> {
        let text = fs::read_to_string(path).map_err(|e| SpecError::Read(path.to_path_buf(), e))?;
        let mut spec: ExperimentSpec =
            serde_json::from_str(&text).map_err(|e| SpecError::Parse(path.to_path_buf(), e))?;
        if let (Some(replay), Some(dir)) = (&spec.replay_fading, path.parent()) {
            if replay.is_relative() {
                spec.replay_fading = Some(dir.join(replay));
            }
        }
        Ok(spec)
    }

    /// Validates the network, the primary run and (if present) the comparison run.
    pub fn validate(&self) -> Result<(), ValidationErrors> {
        let mut errors = config::network_errors(&self.network);
        errors.extend(config::run_errors(&self.run));
        if let Some(cmp) = &self.comparison {
            errors.extend(config::run_errors(cmp));
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ValidationErrors(errors))
        }
    }

    fn fading_source(&self, seed: u64, count: u64) -> Result<Box<dyn FadingSource + Send>> {
        match &self.replay_fading {
            Some(path) => {
                let rows = channel::load_fading_csv(path, self.network.user_count())
                    .with_context(|| format!("loading replay fading {}", path.display()))?;
                Ok(Box::new(ReplayFading::new(rows)))
            }
            None if count > 0 => Ok(Box::new(RngState::new(seed, self.network.user_count()))),
            None => Ok(Box::new(ReplayFading::new(Vec::new()))),
        }
    }
}

/// Machine-readable per-run summary written to `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryDocument {
    pub status: String,
    pub mode: RunMode,
    pub utility: Utility,
    pub seed: u64,
    pub iterations: u64,
    pub completed_iterations: usize,
    pub burn_in_records: usize,
    pub stats: Option<SummaryStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Result of one learning leg: records so far, and the error that stopped it.
pub struct LegOutcome {
    pub trajectory: Trajectory,
    pub failure: Option<LearningError>,
}

/// Runs the learner to completion or first failure, keeping partial records.
pub fn run_leg(
    network: &NetworkConfig,
    run: &RunConfig,
    source: &mut dyn FadingSource,
) -> Result<LegOutcome, LearningError> {
    let mut learner = TailWaterfilling::new(network.clone(), run.clone())?;
    let mut records: Vec<IterationRecord> = Vec::with_capacity(run.iterations as usize);
    let mut failure = None;
    for _ in 0..run.iterations {
        match learner.step_from(source) {
            Ok(rec) => records.push(rec),
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    Ok(LegOutcome {
        trajectory: learner.into_trajectory(records),
        failure,
    })
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

/// Writes summary.json, histogram.csv, outage.csv and optionally trajectory.csv.
pub fn write_leg_outputs(
    dir: &Path,
    network: &NetworkConfig,
    outcome: &LegOutcome,
    emit_trajectory: bool,
    thinning: usize,
) -> Result<SummaryDocument> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let trajectory = &outcome.trajectory;
    let run = &trajectory.run;
    if emit_trajectory {
        trajectory.write_csv(create_file(&dir.join("trajectory.csv"))?, thinning)?;
    }
    let mut doc = SummaryDocument {
        status: "ok".into(),
        mode: run.mode,
        utility: network.utility,
        seed: trajectory.seed,
        iterations: run.iterations,
        completed_iterations: trajectory.len(),
        burn_in_records: run.burn_in_records(trajectory.len()),
        stats: None,
        error: None,
    };
    if let Some(failure) = &outcome.failure {
        doc.status = "runtime_error".into();
        doc.error = Some(failure.to_string());
    } else {
        match metrics::summarize(trajectory, network, run.burn_in_fraction) {
            Ok(stats) => {
                let rates = metrics::rate_samples(trajectory, run.burn_in_fraction);
                let (lo, hi) = metrics::DEFAULT_RATE_RANGE;
                metrics::rate_histogram(&rates, metrics::DEFAULT_HISTOGRAM_BINS, (lo, hi))?
                    .write_csv(create_file(&dir.join("histogram.csv"))?)?;
                metrics::outage_curve(
                    &rates,
                    &metrics::linspace(lo, hi, metrics::DEFAULT_OUTAGE_POINTS),
                )?
                .write_csv(create_file(&dir.join("outage.csv"))?)?;
                doc.stats = Some(stats);
            }
            Err(MetricsError::EmptyAfterBurnIn) => {
                doc.status = "empty_after_burn_in".into();
                doc.error = Some(MetricsError::EmptyAfterBurnIn.to_string());
            }
            Err(e) => return Err(e.into()),
        }
    }
    let mut json = serde_json::to_string_pretty(&doc)?;
    json.push('\n');
    fs::write(dir.join("summary.json"), json)?;
    Ok(doc)
}

fn digest(doc: &SummaryDocument) -> String {
    match &doc.stats {
        Some(s) => {
            let rates: Vec<String> = s
                .users
                .iter()
                .map(|u| format!("{:.4}", u.mean_rate))
                .collect();
            let cvars: Vec<String> = s
                .users
                .iter()
                .map(|u| format!("{:.4}", u.rate_cvar))
                .collect();
            format!(
                "{:?} {:?}: {} iterations, mean power {:.4} (gap {:+.4}), mean rates [{}], rate CV@R [{}]",
                doc.mode,
                doc.utility,
                doc.completed_iterations,
                s.mean_total_power,
                s.power_gap,
                rates.join(", "),
                cvars.join(", ")
            )
        }
        None => format!(
            "{:?} {:?}: {} ({})",
            doc.mode,
            doc.utility,
            doc.status,
            doc.error.as_deref().unwrap_or("")
        ),
    }
}

fn report_config_errors(errors: &ValidationErrors) {
    eprint!("{errors}");
}

fn load_valid(spec_path: &Path) -> Result<ExperimentSpec, Status> {
    let spec = ExperimentSpec::load(spec_path).map_err(|e| {
        eprintln!("error: {e}");
        Status::ConfigError
    })?;
    spec.validate().map_err(|errors| {
        report_config_errors(&errors);
        Status::ConfigError
    })?;
    Ok(spec)
}

pub fn cmd_simulate(spec_path: &Path, out: Option<&Path>, seed: Option<u64>) -> Status {
    let mut spec = match load_valid(spec_path) {
        Ok(spec) => spec,
        Err(status) => return status,
    };
    if let Some(seed) = seed {
        spec.run.seed = seed;
    }
    let out_dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| spec.output_dir.clone());
    match simulate(&spec, &out_dir) {
        Ok(doc) => {
            println!("{}", digest(&doc));
            if doc.status == "runtime_error" {
                eprintln!("error: {}", doc.error.as_deref().unwrap_or("run failed"));
                Status::RuntimeError
            } else {
                Status::Success
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            Status::RuntimeError
        }
    }
}

pub fn simulate(spec: &ExperimentSpec, out_dir: &Path) -> Result<SummaryDocument> {
    let mut source = spec.fading_source(spec.run.seed, spec.run.iterations)?;
    let outcome = run_leg(&spec.network, &spec.run, source.as_mut())?;
    write_leg_outputs(
        out_dir,
        &spec.network,
        &outcome,
        spec.emit_trajectory,
        spec.trajectory_thinning,
    )
}

/// Parallel legs allowed by `TAILFILL_THREADS` (default: available cores).
pub fn thread_budget() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1)
}

pub struct Comparison {
    pub primary: SummaryDocument,
    pub comparison: SummaryDocument,
    pub deltas: Option<Vec<metrics::UserDelta>>,
}

pub fn compare(spec: &ExperimentSpec, out_dir: &Path) -> Result<Comparison> {
    let second = spec
        .comparison
        .clone()
        .context("spec has no `comparison` run")?;
    // Pairing: both legs see literally the same gain sequence.
    let second = RunConfig {
        seed: spec.run.seed,
        ..second
    };
    let rows = spec.run.iterations.max(second.iterations);
    let fading = match &spec.replay_fading {
        Some(path) => ReplayFading::new(
            channel::load_fading_csv(path, spec.network.user_count())
                .with_context(|| format!("loading replay fading {}", path.display()))?,
        ),
        None => ReplayFading::record(&spec.network, spec.run.seed, rows as usize),
    };

    let leg = |run: &RunConfig| -> Result<LegOutcome> {
        let mut source = fading.clone();
        Ok(run_leg(&spec.network, run, &mut source)?)
    };
    let (a, b) = if thread_budget() >= 2 {
        std::thread::scope(|scope| {
            let handle = scope.spawn(|| leg(&second));
            let a = leg(&spec.run);
            (a, handle.join().expect("comparison leg panicked"))
        })
    } else {
        (leg(&spec.run), leg(&second))
    };
    let (a, b) = (a?, b?);

    let primary = write_leg_outputs(
        &out_dir.join("primary"),
        &spec.network,
        &a,
        spec.emit_trajectory,
        spec.trajectory_thinning,
    )?;
    let comparison = write_leg_outputs(
        &out_dir.join("comparison"),
        &spec.network,
        &b,
        spec.emit_trajectory,
        spec.trajectory_thinning,
    )?;

    let deltas = match (&primary.stats, &comparison.stats) {
        (Some(sa), Some(sb)) => {
            let (lo, hi) = metrics::DEFAULT_RATE_RANGE;
            let grid = metrics::linspace(lo, hi, metrics::DEFAULT_OUTAGE_POINTS);
            let ca = metrics::outage_curve(
                &metrics::rate_samples(&a.trajectory, a.trajectory.run.burn_in_fraction),
                &grid,
            )?;
            let cb = metrics::outage_curve(
                &metrics::rate_samples(&b.trajectory, b.trajectory.run.burn_in_fraction),
                &grid,
            )?;
            let deltas = metrics::compare_runs(sa, sb, &ca, &cb);
            metrics::write_delta_csv(create_file(&out_dir.join("delta.csv"))?, &deltas)?;
            Some(deltas)
        }
        _ => None,
    };
    Ok(Comparison {
        primary,
        comparison,
        deltas,
    })
}

pub fn cmd_compare(spec_path: &Path, out: Option<&Path>) -> Status {
    let spec = match load_valid(spec_path) {
        Ok(spec) => spec,
        Err(status) => return status,
    };
    if spec.comparison.is_none() {
        eprintln!(
            "error: spec {} has no `comparison` run config",
            spec_path.display()
        );
        return Status::ConfigError;
    }
    let out_dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| spec.output_dir.clone());
    match compare(&spec, &out_dir) {
        Ok(cmp) => {
            println!("primary:    {}", digest(&cmp.primary));
            println!("comparison: {}", digest(&cmp.comparison));
            if let Some(deltas) = &cmp.deltas {
                let ratios: Vec<String> = deltas
                    .iter()
                    .map(|d| format!("{:.4}", d.variance_ratio))
                    .collect();
                let spreads = (
                    cmp.primary
                        .stats
                        .as_ref()
                        .map_or(f64::NAN, SummaryStats::mean_rate_spread),
                    cmp.comparison
                        .stats
                        .as_ref()
                        .map_or(f64::NAN, SummaryStats::mean_rate_spread),
                );
                println!(
                    "delta: variance ratio [{}], mean-rate spread {:.4} vs {:.4}",
                    ratios.join(", "),
                    spreads.0,
                    spreads.1
                );
            }
            if cmp.primary.status == "runtime_error" || cmp.comparison.status == "runtime_error" {
                Status::RuntimeError
            } else {
                Status::Success
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            Status::RuntimeError
        }
    }
}

pub fn cmd_oracle(count: usize, seed: u64, mutate: bool) -> Status {
    let candidate = if mutate {
        Candidate::CorruptedBranch
    } else {
        Candidate::ClosedForm
    };
    let report = oracle::run_oracle_suite(count, seed, candidate);
    println!(
        "oracle: {} tuples, {} checks, {} passed, {} failed",
        report.tuples,
        report.checks,
        report.passed(),
        report.failures.len()
    );
    if report.all_passed() {
        return Status::Success;
    }
    for f in &report.failures {
        let p = &f.inputs;
        eprintln!(
            "FAIL {}: h={} t={} lambda={} mu={} alpha={} noise_variance={} expected={} actual={}",
            f.check,
            p.gain,
            p.target,
            p.lambda,
            p.mu,
            p.alpha,
            p.noise_variance,
            f.expected,
            f.actual
        );
    }
    Status::OracleFailure
}

/// Variant names of every configuration error, for tests and reports.
pub fn error_kinds(errors: &ValidationErrors) -> Vec<&'static str> {
    errors.0.iter().map(ConfigError::kind).collect()
}
