//! Order statistics and binomial error bars for Monte-Carlo estimates.

use crate::{Result, SenseError};

/// Threshold exceeded by a fraction `alpha` of `samples`: the
/// `⌈(1−α)M⌉`-th smallest value. Sorts `samples` in place.
pub fn upper_quantile(samples: &mut [f64], alpha: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(SenseError::domain("upper quantile of an empty sample"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(SenseError::domain(format!(
            "alpha must be in (0, 1), got {alpha}"
        )));
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(SenseError::domain("sample contains NaN"));
    }
    samples.sort_by(f64::total_cmp);
    let m = samples.len();
    let rank = ((1.0 - alpha) * m as f64).ceil() as usize;
    Ok(samples[rank.clamp(1, m) - 1])
}

/// Fraction of `samples` strictly above `threshold`.
pub fn exceedance(samples: &[f64], threshold: f64) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().filter(|&&x| x > threshold).count() as f64 / samples.len() as f64
}

/// `sqrt(p(1−p)/n)`.
pub fn binomial_stderr(p: f64, trials: usize) -> f64 {
    if trials == 0 {
        return 0.0;
    }
    (p * (1.0 - p) / trials as f64).max(0.0).sqrt()
}
