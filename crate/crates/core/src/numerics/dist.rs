//! Gaussian, chi-square and (noncentral) F distribution functions.

use statrs::function::{beta::checked_beta_reg, erf, gamma};

use crate::{Result, SenseError};

/// Relative size below which Poisson-mixture terms are dropped.
const MIXTURE_TOL: f64 = 1e-12;
const MAX_MIXTURE_TERMS: usize = 100_000;

/// Gaussian right-tail probability `Q(x) = P(N(0,1) > x)`.
pub fn gaussian_q(x: f64) -> f64 {
    0.5 * erf::erfc(x / std::f64::consts::SQRT_2)
}

/// Inverse of [`gaussian_q`].
pub fn gaussian_q_inv(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(SenseError::domain(format!(
            "gaussian_q_inv needs p in (0, 1), got {p}"
        )));
    }
    let mut x = std::f64::consts::SQRT_2 * erf::erfc_inv(2.0 * p);
    // Two Newton steps polish the rational approximation.
    for _ in 0..2 {
        let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        if pdf <= 0.0 {
            break;
        }
        x += (gaussian_q(x) - p) / pdf;
    }
    Ok(x)
}

/// Chi-square CDF with `k` degrees of freedom.
pub fn chi_square_cdf(x: f64, k: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        gamma::gamma_lr(0.5 * k, 0.5 * x)
    }
}

fn check_dof(d1: f64, d2: f64) -> Result<()> {
    if d1 >= 1.0 && d2 >= 1.0 && d1.is_finite() && d2.is_finite() {
        Ok(())
    } else {
        Err(SenseError::domain(format!(
            "F degrees of freedom must be >= 1, got ({d1}, {d2})"
        )))
    }
}

fn beta_reg(a: f64, b: f64, x: f64) -> Result<f64> {
    checked_beta_reg(a, b, x.clamp(0.0, 1.0))
        .map_err(|e| SenseError::Numerical(format!("incomplete beta({a}, {b}, {x}): {e}")))
}

/// Central F CDF with `(d1, d2)` degrees of freedom.
pub fn f_cdf(x: f64, d1: f64, d2: f64) -> Result<f64> {
    check_dof(d1, d2)?;
    if x <= 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    beta_reg(0.5 * d1, 0.5 * d2, d1 * x / (d1 * x + d2))
}

/// Central F right-tail probability, evaluated without cancellation.
pub fn f_sf(x: f64, d1: f64, d2: f64) -> Result<f64> {
    check_dof(d1, d2)?;
    if x <= 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    beta_reg(0.5 * d2, 0.5 * d1, d2 / (d1 * x + d2))
}

/// Bracketed bisection for a nonincreasing `tail(x)` crossing `target`.
fn invert_tail(target: f64, tail: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut expansions = 0;
    while tail(hi)? > target {
        lo = hi;
        hi *= 2.0;
        expansions += 1;
        if expansions > 1100 {
            return Err(SenseError::Numerical(format!(
                "could not bracket quantile for tail probability {target}"
            )));
        }
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if tail(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi.max(1e-300) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Inverse CDF of the central F distribution.
pub fn f_quantile(p: f64, d1: f64, d2: f64) -> Result<f64> {
    check_dof(d1, d2)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(SenseError::domain(format!(
            "F quantile needs p in (0, 1), got {p}"
        )));
    }
    if p <= 0.5 {
        // Lower tail: invert the CDF itself, which keeps precision for small p.
        invert_tail(-p, |x| f_cdf(x, d1, d2).map(|c| -c))
    } else {
        invert_tail(1.0 - p, |x| f_sf(x, d1, d2))
    }
}

/// Point with right-tail probability `alpha`, i.e. `f_quantile(1 - alpha)`.
pub fn f_upper_quantile(alpha: f64, d1: f64, d2: f64) -> Result<f64> {
    check_dof(d1, d2)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(SenseError::domain(format!(
            "F upper quantile needs alpha in (0, 1), got {alpha}"
        )));
    }
    invert_tail(alpha, |x| f_sf(x, d1, d2))
}

fn ln_poisson_pmf(j: usize, mean: f64) -> f64 {
    let jf = j as f64;
    jf * mean.ln() - mean - gamma::ln_gamma(jf + 1.0)
}

/// Right tail of the noncentral F distribution with noncentrality `lambda`
/// (sum of squared means over the noise variance).
///
/// Evaluated as a Poisson(`lambda / 2`) mixture of central F tails, summed
/// outward from the mixture mode.
pub fn noncentral_f_sf(x: f64, d1: f64, d2: f64, lambda: f64) -> Result<f64> {
    check_dof(d1, d2)?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(SenseError::domain(format!(
            "noncentrality must be finite and >= 0, got {lambda}"
        )));
    }
    if lambda == 0.0 {
        return f_sf(x, d1, d2);
    }
    if x <= 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    let mean = 0.5 * lambda;
    let y_c = d2 / (d1 * x + d2);
    let term = |j: usize| -> Result<(f64, f64)> {
        let w = ln_poisson_pmf(j, mean).exp();
        let tail = beta_reg(0.5 * d2, 0.5 * d1 + j as f64, y_c)?;
        Ok((w, w * tail))
    };

    let mode = mean.floor() as usize;
    let (w0, t0) = term(mode)?;
    let mut total = t0;
    let mut count = 1;

    let mut j = mode;
    while j > 0 {
        j -= 1;
        let (w, t) = term(j)?;
        total += t;
        count += 1;
        if w < MIXTURE_TOL * w0 {
            break;
        }
    }
    let mut j = mode;
    loop {
        j += 1;
        let (w, t) = term(j)?;
        total += t;
        count += 1;
        // Weights decay monotonically past the mode and tails are <= 1.
        if w < MIXTURE_TOL * w0 {
            break;
        }
        if count > MAX_MIXTURE_TERMS {
            return Err(SenseError::Numerical(format!(
                "noncentral F series did not converge (lambda = {lambda})"
            )));
        }
    }
    Ok(total.clamp(0.0, 1.0))
}
