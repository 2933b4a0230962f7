//! Autoregressive PU signal `i_p = −Σ_j φ_j i_{p−j} + e_p` observed through
//! per-symbol `Q`-point DFTs.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use super::{check_powers, NormalizedCovariance, PuContribution};
use crate::numerics::complex_normal;
use crate::ofdm::OfdmConfig;
use crate::{Result, SenseError};

const MIN_BURN_IN: usize = 64;
const MAX_BURN_IN: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ArPuConfig {
    /// `[φ_1, ..., φ_r]`; empty for a white process.
    pub coefficients: Vec<f64>,
    pub band: (usize, usize),
    pub power_per_carrier: Vec<f64>,
    /// Samples discarded before the observation starts. Derived from the
    /// pole radius when absent.
    pub burn_in: Option<usize>,
}

impl ArPuConfig {
    pub fn new(coefficients: Vec<f64>, band: (usize, usize), power: f64) -> Self {
        Self {
            coefficients,
            band,
            power_per_carrier: vec![power; band.1.saturating_sub(band.0) + 1],
            burn_in: None,
        }
    }

    pub fn order(&self) -> usize {
        self.coefficients.len()
    }

    pub fn validate(&self, sys: &OfdmConfig) -> Result<()> {
        sys.validate()?;
        sys.check_band(self.band)?;
        check_powers(self.band, &self.power_per_carrier)?;
        if self.coefficients.iter().any(|c| !c.is_finite()) {
            return Err(SenseError::config("AR coefficients must be finite"));
        }
        if !is_stable(&self.coefficients) {
            return Err(SenseError::config(format!(
                "AR polynomial with coefficients {:?} is not stable",
                self.coefficients
            )));
        }
        if sys.num_carriers * sys.num_symbols <= self.order() {
            return Err(SenseError::config("observation shorter than the AR order"));
        }
        Ok(())
    }

    /// `ν²` giving the process unit power.
    pub fn innovation_variance(&self) -> Result<f64> {
        let g = initial_autocovariance(&self.coefficients, 1.0)?;
        let g0 = g.first().copied().unwrap_or(1.0);
        if !(g0 > 0.0 && g0.is_finite()) {
            return Err(SenseError::Numerical(format!(
                "AR process power {g0} is not positive"
            )));
        }
        Ok(1.0 / g0)
    }

    /// Unit-power autocovariance `γ(0), ..., γ(len−1)`.
    pub fn autocovariance(&self, len: usize) -> Result<Vec<f64>> {
        let nu2 = self.innovation_variance()?;
        let r = self.order();
        let mut g = initial_autocovariance(&self.coefficients, nu2)?;
        let known = g.len();
        g.resize(len.max(known), 0.0);
        for k in known..len {
            g[k] = -(1..=r)
                .map(|j| self.coefficients[j - 1] * g[k - j])
                .sum::<f64>();
        }
        g.truncate(len);
        Ok(g)
    }

    fn default_burn_in(&self) -> usize {
        let r = self.order();
        if r == 0 {
            return 0;
        }
        let companion = DMatrix::from_fn(r, r, |i, j| {
            if i == 0 {
                -self.coefficients[j]
            } else if i == j + 1 {
                1.0
            } else {
                0.0
            }
        });
        let rho = companion
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if rho <= 0.0 {
            return MIN_BURN_IN;
        }
        let n = (1e-12f64.ln() / rho.ln()).ceil();
        if n.is_finite() {
            (n as usize).clamp(MIN_BURN_IN, MAX_BURN_IN)
        } else {
            MAX_BURN_IN
        }
    }
}

/// Schur–Cohn step-down test on `1 + φ_1 z⁻¹ + ... + φ_r z⁻ʳ`.
fn is_stable(phi: &[f64]) -> bool {
    let mut a: Vec<f64> = phi.to_vec();
    while let Some(&k) = a.last() {
        if k.abs() >= 1.0 {
            return false;
        }
        let m = a.len();
        let denom = 1.0 - k * k;
        let prev: Vec<f64> = (0..m - 1)
            .map(|i| (a[i] - k * a[m - 2 - i]) / denom)
            .collect();
        a = prev;
    }
    true
}

/// `γ(0), ..., γ(r−1)` for innovation variance `nu2`, recovered from the
/// persymmetry of the inverse Toeplitz autocovariance.
///
/// With `A` the unit-lower-triangular whitening matrix of size `M`,
/// `R⁻¹ = A† diag(R_0⁻¹, ν⁻²I) A`. Its northwest `r×r` block is
/// `R_0⁻¹ + ν⁻²A21†A21`; its southeast block is the corner of `ν⁻²A22†A22`.
/// Persymmetry equates the first with the flip of the second.
fn initial_autocovariance(phi: &[f64], nu2: f64) -> Result<Vec<f64>> {
    let r = phi.len();
    if r == 0 {
        return Ok(vec![nu2]);
    }
    let m = 3 * r + 1;
    let a = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            1.0
        } else if i >= r && j < i && i - j <= r {
            phi[i - j - 1]
        } else {
            0.0
        }
    });
    let a21 = a.view((r, 0), (m - r, r));
    let a22 = a.view((r, r), (m - r, m - r));
    let nw = a21.transpose() * a21 / nu2;
    let se_full = a22.transpose() * a22 / nu2;
    let off = m - 2 * r;
    let se = se_full.view((off, off), (r, r));
    let r0_inv = DMatrix::from_fn(r, r, |i, j| se[(r - 1 - j, r - 1 - i)] - nw[(i, j)]);
    let r0 = r0_inv
        .try_inverse()
        .ok_or_else(|| SenseError::Numerical("AR initial covariance block is singular".into()))?;
    Ok((0..r).map(|k| r0[(k, 0)]).collect())
}

/// Normalized covariance of `I_q` for the AR model.
///
/// `E{I_q(n) I_q(m)*} = Σ_{|s|<Q} (Q − |s|) e^{−j2πqs/Q} γ((n−m)Q + s)`,
/// divided by its value at `n = m`.
pub fn ar_covariance(cfg: &ArPuConfig, sys: &OfdmConfig, q: usize) -> Result<NormalizedCovariance> {
    cfg.validate(sys)?;
    if q >= sys.num_carriers {
        return Err(SenseError::config(format!("carrier {q} out of range")));
    }
    let q_count = sys.num_carriers;
    let n = sys.num_symbols;
    let gamma = cfg.autocovariance(n * q_count + q_count)?;
    let lags = lag_covariances(&gamma, q_count, n, q);
    let c0 = lags[0].re;
    if !(c0 > 0.0) {
        return Err(SenseError::Degenerate(format!(
            "AR process has no power at carrier {q}"
        )));
    }
    let c = DMatrix::from_fn(n, n, |i, j| {
        if i >= j {
            lags[i - j] / c0
        } else {
            lags[j - i].conj() / c0
        }
    });
    NormalizedCovariance::new(c, q)
}

fn lag_covariances(gamma: &[f64], q_count: usize, n: usize, q: usize) -> Vec<Complex64> {
    let g = |k: i64| gamma[k.unsigned_abs() as usize];
    let qi = q_count as i64;
    (0..n as i64)
        .map(|d| {
            (-(qi - 1)..qi)
                .map(|s| {
                    let w = (qi - s.abs()) as f64 * g(d * qi + s);
                    Complex64::from_polar(
                        w,
                        -2.0 * PI * (q as i64 * s).rem_euclid(qi) as f64 / qi as f64,
                    )
                })
                .sum()
        })
        .collect()
}

/// Reusable AR PU generator.
#[derive(Debug, Clone)]
pub struct ArGenerator {
    cfg: ArPuConfig,
    q_count: usize,
    n_count: usize,
    nu2: f64,
    burn_in: usize,
    /// DFT row `e^{−j2πqp/Q}` for each band carrier.
    twiddles: DMatrix<Complex64>,
    scales: Vec<f64>,
    carrier_power: Vec<f64>,
}

impl ArGenerator {
    pub fn new(cfg: &ArPuConfig, sys: &OfdmConfig) -> Result<Self> {
        cfg.validate(sys)?;
        let q_count = sys.num_carriers;
        let (q0, q1) = cfg.band;
        let width = q1 + 1 - q0;
        let gamma = cfg.autocovariance(q_count)?;
        let carrier_power: Vec<f64> = (q0..=q1)
            .map(|q| lag_covariances(&gamma, q_count, 1, q)[0].re)
            .collect();
        let twiddles = DMatrix::from_fn(width, q_count, |b, p| {
            let k = ((q0 + b) * p) % q_count;
            Complex64::from_polar(1.0, -2.0 * PI * k as f64 / q_count as f64)
        });
        let mut gen = Self {
            cfg: cfg.clone(),
            q_count,
            n_count: sys.num_symbols,
            nu2: cfg.innovation_variance()?,
            burn_in: cfg.burn_in.unwrap_or_else(|| cfg.default_burn_in()),
            twiddles,
            scales: vec![0.0; width],
            carrier_power,
        };
        gen.set_powers(&cfg.power_per_carrier)?;
        Ok(gen)
    }

    fn set_powers(&mut self, powers: &[f64]) -> Result<()> {
        check_powers(self.cfg.band, powers)?;
        for (b, p) in powers.iter().enumerate() {
            let natural = self.carrier_power[b];
            if *p > 0.0 && !(natural > 0.0) {
                return Err(SenseError::Degenerate(format!(
                    "AR process has no power at carrier {}",
                    self.cfg.band.0 + b
                )));
            }
            self.scales[b] = if *p > 0.0 { (p / natural).sqrt() } else { 0.0 };
        }
        self.cfg.power_per_carrier = powers.to_vec();
        Ok(())
    }

    pub fn with_powers(&self, powers: &[f64]) -> Result<Self> {
        let mut g = self.clone();
        g.set_powers(powers)?;
        Ok(g)
    }

    pub fn config(&self) -> &ArPuConfig {
        &self.cfg
    }

    /// Time-domain samples `i_0, ..., i_{QN−1}` after burn-in.
    pub fn time_samples<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Complex64> {
        let phi = &self.cfg.coefficients;
        let r = phi.len();
        let total = self.burn_in + self.q_count * self.n_count;
        let mut x: Vec<Complex64> = Vec::with_capacity(total);
        for p in 0..total {
            let mut v = complex_normal(rng, self.nu2);
            for j in 1..=r.min(p) {
                v -= x[p - j] * phi[j - 1];
            }
            x.push(v);
        }
        x.split_off(self.burn_in)
    }

    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> PuContribution {
        let i = self.time_samples(rng);
        let width = self.scales.len();
        let q = self.q_count;
        let mut values = DMatrix::<Complex64>::zeros(width, self.n_count);
        for n in 0..self.n_count {
            let block = &i[n * q..(n + 1) * q];
            for b in 0..width {
                let row = self.twiddles.row(b);
                let s: Complex64 = row.iter().zip(block).map(|(w, x)| w * x).sum();
                values[(b, n)] = s * self.scales[b];
            }
        }
        PuContribution {
            first_carrier: self.cfg.band.0,
            values,
        }
    }
}

pub fn generate_ar<R: Rng + ?Sized>(
    cfg: &ArPuConfig,
    sys: &OfdmConfig,
    rng: &mut R,
) -> Result<PuContribution> {
    Ok(ArGenerator::new(cfg, sys)?.generate(rng))
}
