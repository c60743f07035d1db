//! Empirical CV@R and V@R.
//!
//! For a loss sample `z_1..z_N` and level `alpha`, the upper-tail CV@R is
//!
//! ```text
//! min_t  t + 1/(alpha N) * sum_j (z_j - t)_+
//! ```
//!
//! which equals the mean of the largest `alpha N` values, the boundary atom
//! weighted fractionally. The reward orientation is the reflection
//! `-cvar_upper(-z)`: the mean of the smallest `alpha N` values.

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RiskError {
    #[error("sample is empty")]
    EmptySample,
    #[error("alpha must lie in (0, 1] (got {0})")]
    AlphaOutOfRange(f64),
    #[error("sample value {index} is not finite")]
    NonFinite { index: usize },
}

fn check(values: &[f64], alpha: f64) -> Result<(), RiskError> {
    if values.is_empty() {
        return Err(RiskError::EmptySample);
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(RiskError::AlphaOutOfRange(alpha));
    }
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(RiskError::NonFinite { index });
    }
    Ok(())
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Mean of the `mass` leading entries of `ordered`, the last one fractionally.
fn leading_tail_mean<'a>(ordered: impl Iterator<Item = &'a f64>, mass: f64) -> f64 {
    let mut remaining = mass;
    let mut acc = 0.0;
    for &v in ordered {
        if remaining <= 0.0 {
            break;
        }
        let w = remaining.min(1.0);
        acc += w * v;
        remaining -= w;
    }
    acc / mass
}

/// Upper-tail CV@R of a loss sample (mean of the worst `alpha` fraction).
pub fn cvar_upper(values: &[f64], alpha: f64) -> Result<f64, RiskError> {
    check(values, alpha)?;
    if alpha == 1.0 {
        return Ok(mean(values));
    }
    let v = sorted(values);
    Ok(leading_tail_mean(v.iter().rev(), alpha * v.len() as f64))
}

/// Lower-tail CV@R of a reward sample, `-cvar_upper(-z, alpha)`.
pub fn cvar_lower_reward(values: &[f64], alpha: f64) -> Result<f64, RiskError> {
    check(values, alpha)?;
    if alpha == 1.0 {
        return Ok(mean(values));
    }
    let v = sorted(values);
    Ok(leading_tail_mean(v.iter(), alpha * v.len() as f64))
}

/// Lower `alpha`-quantile, `min { x : F_N(x) >= alpha }`.
pub fn empirical_var(values: &[f64], alpha: f64) -> Result<f64, RiskError> {
    check(values, alpha)?;
    let v = sorted(values);
    Ok(v[lower_quantile_index(v.len(), alpha)])
}

/// Zero-based index of the lower `alpha`-quantile in a sorted sample of size `n`.
pub(crate) fn lower_quantile_index(n: usize, alpha: f64) -> usize {
    let target = alpha * n as f64;
    let mut k = target.ceil() as usize;
    // `alpha * n` may land a hair above an integer through rounding.
    if k > 0 && (k - 1) as f64 >= target * (1.0 - 1e-12) {
        k -= 1;
    }
    k.clamp(1, n) - 1
}

/// Lower quantile at any level in [0, 1]; level 0 returns the minimum.
pub fn quantile(values: &[f64], level: f64) -> Result<f64, RiskError> {
    if level == 0.0 {
        check(values, 1.0)?;
        return Ok(values.iter().copied().fold(f64::INFINITY, f64::min));
    }
    empirical_var(values, level)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population variance.
pub fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64
}
