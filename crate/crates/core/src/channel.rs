//! Fading generation.
//!
//! Gains are Rayleigh amplitudes drawn by inverse-CDF from per-user ChaCha8
//! substreams: user `i` uses `ChaCha8Rng::seed_from_u64(seed)` with stream
//! `i`. ChaCha is counter based and platform independent, so a seed pins the
//! whole gain sequence. A fading sequence can also be replayed from CSV.

use crate::config::NetworkConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::{Read, Write};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum ChannelError {
    #[error("quantile level must lie in (0, 1) (got {0})")]
    QOutOfRange(f64),
    #[error("scale must be > 0 (got {0})")]
    NonPositiveScale(f64),
    #[error("fading replay exhausted after {0} rows")]
    ReplayExhausted(usize),
    #[error("fading replay row {row}: expected {expected} gains, found {found}")]
    ReplayWidth {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("fading replay row {row}, column {column}: gain must be finite and > 0 (got {value})")]
    ReplayGain {
        row: usize,
        column: usize,
        value: f64,
    },
    #[error("fading replay row {row}, column {column}: {message}")]
    ReplayParse {
        row: usize,
        column: usize,
        message: String,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One realization of the per-user channel gains, all strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct FadingSample {
    pub gains: Vec<f64>,
}

impl FadingSample {
    pub fn new(gains: Vec<f64>) -> Self {
        debug_assert!(gains.iter().all(|&g| g > 0.0 && g.is_finite()));
        FadingSample { gains }
    }

    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }
}

/// Inverse Rayleigh CDF: `scale * sqrt(-2 ln(1 - q))`.
pub fn rayleigh_quantile(q: f64, scale: f64) -> Result<f64, ChannelError> {
    if !(q > 0.0 && q < 1.0) {
        return Err(ChannelError::QOutOfRange(q));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(ChannelError::NonPositiveScale(scale));
    }
    Ok(scale * (-2.0 * (-q).ln_1p()).sqrt())
}

pub fn rayleigh_cdf(x: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let z = x / scale;
    -(-0.5 * z * z).exp_m1()
}

pub fn rayleigh_mean(scale: f64) -> f64 {
    scale * (std::f64::consts::PI / 2.0).sqrt()
}

/// Deterministic generator state: one ChaCha8 substream per user.
#[derive(Debug, Clone)]
pub struct RngState {
    seed: u64,
    streams: Vec<ChaCha8Rng>,
}

impl RngState {
    pub fn new(seed: u64, user_count: usize) -> Self {
        let streams = (0..user_count)
            .map(|user| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(user as u64);
                rng
            })
            .collect();
        RngState { seed, streams }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn user_count(&self) -> usize {
        self.streams.len()
    }

    /// Next Rayleigh draw for `user`; an exact zero is resampled.
    pub fn next_gain(&mut self, user: usize, scale: f64) -> f64 {
        let rng = &mut self.streams[user];
        loop {
            let u: f64 = rng.gen();
            let gain = scale * (-2.0 * (-u).ln_1p()).sqrt();
            if gain > 0.0 {
                return gain;
            }
        }
    }
}

/// Draws one gain per user at the configured Rayleigh scales.
pub fn sample_fading(network: &NetworkConfig, rng: &mut RngState) -> FadingSample {
    assert_eq!(
        rng.user_count(),
        network.user_count(),
        "generator built for a different user count"
    );
    let gains = network
        .users
        .iter()
        .enumerate()
        .map(|(i, u)| rng.next_gain(i, u.fading_scale))
        .collect();
    FadingSample { gains }
}

/// Anything that can feed the learner one fading realization per iteration.
pub trait FadingSource {
    fn next_sample(&mut self, network: &NetworkConfig) -> Result<FadingSample, ChannelError>;
}

impl FadingSource for RngState {
    fn next_sample(&mut self, network: &NetworkConfig) -> Result<FadingSample, ChannelError> {
        Ok(sample_fading(network, self))
    }
}

/// Replays a fixed sequence of realizations, one per call.
#[derive(Debug, Clone)]
pub struct ReplayFading {
    rows: Vec<FadingSample>,
    cursor: usize,
}

impl ReplayFading {
    pub fn new(rows: Vec<FadingSample>) -> Self {
        ReplayFading { rows, cursor: 0 }
    }

    /// Samples `count` rows from a fresh generator seeded with `seed`.
    pub fn record(network: &NetworkConfig, seed: u64, count: usize) -> Self {
        let mut rng = RngState::new(seed, network.user_count());
        let rows = (0..count)
            .map(|_| sample_fading(network, &mut rng))
            .collect();
        ReplayFading::new(rows)
    }

    pub fn rows(&self) -> &[FadingSample] {
        &self.rows
    }

    pub fn remaining(&self) -> usize {
        self.rows.len() - self.cursor
    }

    pub fn rewind(&mut self) {
        self.cursor = 0;
    }
}

impl FadingSource for ReplayFading {
    fn next_sample(&mut self, network: &NetworkConfig) -> Result<FadingSample, ChannelError> {
        let row = self
            .rows
            .get(self.cursor)
            .ok_or(ChannelError::ReplayExhausted(self.rows.len()))?;
        if row.len() != network.user_count() {
            return Err(ChannelError::ReplayWidth {
                row: self.cursor + 1,
                expected: network.user_count(),
                found: row.len(),
            });
        }
        self.cursor += 1;
        Ok(row.clone())
    }
}

/// Reads a replay file: header `h_1,...,h_n`, then one row per iteration.
pub fn read_fading_csv<R: Read>(
    reader: R,
    user_count: usize,
) -> Result<Vec<FadingSample>, ChannelError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let width = rdr.headers()?.len();
    if width != user_count {
        return Err(ChannelError::ReplayWidth {
            row: 0,
            expected: user_count,
            found: width,
        });
    }
    let mut rows = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let record = record?;
        let row = idx + 1;
        if record.len() != user_count {
            return Err(ChannelError::ReplayWidth {
                row,
                expected: user_count,
                found: record.len(),
            });
        }
        let mut gains = Vec::with_capacity(user_count);
        for (column, field) in record.iter().enumerate() {
            let value: f64 = field.parse().map_err(|e: std::num::ParseFloatError| {
                ChannelError::ReplayParse {
                    row,
                    column: column + 1,
                    message: e.to_string(),
                }
            })?;
            if !(value > 0.0 && value.is_finite()) {
                return Err(ChannelError::ReplayGain {
                    row,
                    column: column + 1,
                    value,
                });
            }
            gains.push(value);
        }
        rows.push(FadingSample { gains });
    }
    Ok(rows)
}

pub fn load_fading_csv(path: &Path, user_count: usize) -> Result<Vec<FadingSample>, ChannelError> {
    read_fading_csv(std::fs::File::open(path)?, user_count)
}

pub fn write_fading_csv<W: Write>(writer: W, rows: &[FadingSample]) -> Result<(), ChannelError> {
    let width = rows.first().map_or(0, FadingSample::len);
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record((1..=width).map(|i| format!("h_{i}")))?;
    for row in rows {
        wtr.write_record(row.gains.iter().map(|g| g.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}
