//! PU signal as a sum of `K` faded PSK tones with symbol period `T_i`.
//!
//! Tone `k` of PU symbol `l` is `ζ_{l,k} X_{l,k} exp(j2π(f_i + k/T_i)t + jφ)`.
//! After down-conversion by `f_s`, sampling at `T_d = T_s/Q` and a `Q`-point
//! DFT, tone `k` reaches carrier `q` through the Dirichlet kernel
//! `Σ_p exp(j2πβ_{k,q} p)` with `β_{k,q} = [(f_i − f_s + k/T_i)T_s − q]/Q`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_powers, NormalizedCovariance, PuContribution};
use crate::numerics::complex_normal;
use crate::ofdm::OfdmConfig;
use crate::{Result, SenseError};

/// `β` closer than this to an integer is treated as the Dirichlet peak.
const INTEGER_BETA_TOL: f64 = 1e-12;

/// Distribution of the per-symbol tone fading `ζ_{l,k}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fading {
    /// Circular complex Gaussian with unit power (Rayleigh amplitude).
    #[default]
    Rayleigh,
    /// `ζ = 1`.
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TonalPuConfig {
    /// Number of tones `K`.
    pub num_tones: usize,
    /// PU symbol duration `T_i` in seconds.
    pub symbol_duration: f64,
    /// PU carrier frequency `f_i` in Hz.
    pub carrier_freq: f64,
    /// Occupied carriers `[q0, q1]`.
    pub band: (usize, usize),
    /// Target received power `P_I(q)` for each carrier of the band.
    pub power_per_carrier: Vec<f64>,
    pub fading: Fading,
    /// PSK order of the tone symbols `X_{l,k}`.
    pub psk_order: usize,
}

impl TonalPuConfig {
    /// Tones spaced `1/T_i` apart starting exactly on carrier `q0` and
    /// filling the band, all carriers at `power`.
    pub fn covering_band(
        sys: &OfdmConfig,
        band: (usize, usize),
        symbol_duration: f64,
        power: f64,
    ) -> Self {
        let width = band.1.saturating_sub(band.0) + 1;
        let tones_per_carrier = symbol_duration / sys.symbol_duration;
        Self {
            num_tones: ((width as f64) * tones_per_carrier).ceil().max(1.0) as usize,
            symbol_duration,
            carrier_freq: sys.carrier_freq + band.0 as f64 / sys.symbol_duration,
            band,
            power_per_carrier: vec![power; width],
            fading: Fading::Rayleigh,
            psk_order: 4,
        }
    }

    pub fn validate(&self, sys: &OfdmConfig) -> Result<()> {
        sys.validate()?;
        if self.num_tones < 1 {
            return Err(SenseError::config("tonal PU needs at least one tone"));
        }
        if !(self.symbol_duration >= sys.symbol_duration && self.symbol_duration.is_finite()) {
            return Err(SenseError::config(format!(
                "PU symbol duration {} must be >= OFDM symbol duration {}",
                self.symbol_duration, sys.symbol_duration
            )));
        }
        if !self.carrier_freq.is_finite() {
            return Err(SenseError::config("PU carrier frequency must be finite"));
        }
        if self.psk_order < 2 {
            return Err(SenseError::config("PSK order must be >= 2"));
        }
        sys.check_band(self.band)?;
        check_powers(self.band, &self.power_per_carrier)
    }

    /// `η = ⌊T_i / T_s⌋`, the correlation extent in OFDM symbols.
    pub fn eta(&self, sys: &OfdmConfig) -> usize {
        // Guard against 26.6e-6 / 312.5e-9 style ratios landing a hair below an integer.
        ((self.symbol_duration / sys.symbol_duration) * (1.0 + 1e-12)).floor() as usize
    }

    fn beta(&self, sys: &OfdmConfig, k: usize, q: usize) -> f64 {
        let offset = (self.carrier_freq - sys.carrier_freq) * sys.symbol_duration
            + k as f64 * sys.symbol_duration / self.symbol_duration;
        (offset - q as f64) / sys.num_carriers as f64
    }

    /// Fractional cycles per OFDM symbol of tone `k`, `frac(T_s (f_i + k/T_i))`.
    fn cycles_per_symbol(&self, sys: &OfdmConfig, k: usize) -> f64 {
        let carrier = (sys.symbol_duration * self.carrier_freq).fract();
        let tone = (k as f64 * sys.symbol_duration / self.symbol_duration).fract();
        (carrier + tone).fract()
    }
}

fn near_integer(x: f64) -> bool {
    (x - x.round()).abs() < INTEGER_BETA_TOL
}

/// `Σ_{p=a}^{b} exp(j2πβp)`, exact at the removable singularity.
fn partial_dirichlet(beta: f64, a: usize, b: usize) -> Complex64 {
    let len = (b + 1 - a) as f64;
    if near_integer(beta) {
        return Complex64::new(len, 0.0);
    }
    let ratio = (PI * beta * len).sin() / (PI * beta).sin();
    Complex64::from_polar(ratio, PI * beta * (a + b) as f64)
}

/// Squared Dirichlet weight `sin²(πβQ) / sin²(πβ)`, `Q²` at integer `β`.
fn dirichlet_weight(beta: f64, q_count: usize) -> f64 {
    if near_integer(beta) {
        return (q_count * q_count) as f64;
    }
    let r = (PI * beta * q_count as f64).sin() / (PI * beta).sin();
    r * r
}

/// Normalized covariance `C_q` of the tonal PU at carrier `q`:
/// `(1 − |n−m|/η) Σ_k w_k e^{j2π(n−m)T_s(f_i+k/T_i)} / Σ_k w_k` for
/// `|n−m| < η`, zero otherwise, with Dirichlet weights `w_k`.
pub fn tonal_covariance(
    cfg: &TonalPuConfig,
    sys: &OfdmConfig,
    q: usize,
) -> Result<NormalizedCovariance> {
    cfg.validate(sys)?;
    if q >= sys.num_carriers {
        return Err(SenseError::config(format!("carrier {q} out of range")));
    }
    let q_count = sys.num_carriers;
    let weights: Vec<f64> = (0..cfg.num_tones)
        .map(|k| dirichlet_weight(cfg.beta(sys, k, q), q_count))
        .collect();
    let total: f64 = weights.iter().sum();
    if !(total > 1e-18 * (q_count * q_count) as f64) {
        return Err(SenseError::Degenerate(format!(
            "no tone leaks into carrier {q} (Dirichlet weights sum to {total:.3e})"
        )));
    }
    let cycles: Vec<f64> = (0..cfg.num_tones)
        .map(|k| cfg.cycles_per_symbol(sys, k))
        .collect();

    let n = sys.num_symbols;
    let eta = cfg.eta(sys);
    // Entries depend on the lag d = n − m only.
    let lag_value = |d: usize| -> Complex64 {
        if d >= eta {
            return Complex64::new(0.0, 0.0);
        }
        let taper = 1.0 - d as f64 / eta as f64;
        let sum: Complex64 = weights
            .iter()
            .zip(&cycles)
            .map(|(w, c)| Complex64::from_polar(*w, 2.0 * PI * (d as f64 * c).fract()))
            .sum();
        sum * (taper / total)
    };
    let lags: Vec<Complex64> = (0..n).map(lag_value).collect();
    let c = DMatrix::from_fn(n, n, |i, j| {
        if i >= j {
            lags[i - j]
        } else {
            lags[j - i].conj()
        }
    });
    NormalizedCovariance::new(c, q)
}

/// Reusable tonal PU generator: per-carrier Dirichlet coefficients and power
/// scales are computed once.
#[derive(Debug, Clone)]
pub struct TonalGenerator {
    cfg: TonalPuConfig,
    sys: OfdmConfig,
    /// `coeff[(k, b)] = Σ_{p<Q} exp(j2πβ_{k,q0+b} p)`.
    coeff: DMatrix<Complex64>,
    /// `1 / (exp(j2πβ) − 1)`, or `None` at the Dirichlet peak.
    inv_denom: DMatrix<Option<Complex64>>,
    scales: Vec<f64>,
}

impl TonalGenerator {
    pub fn new(cfg: &TonalPuConfig, sys: &OfdmConfig) -> Result<Self> {
        cfg.validate(sys)?;
        let (q0, q1) = cfg.band;
        let width = q1 + 1 - q0;
        let q_count = sys.num_carriers;
        let betas = DMatrix::from_fn(cfg.num_tones, width, |k, b| cfg.beta(sys, k, q0 + b));
        let coeff = betas.map(|beta| partial_dirichlet(beta, 0, q_count - 1));
        let inv_denom = betas.map(|beta| {
            (!near_integer(beta)).then(|| (Complex64::from_polar(1.0, 2.0 * PI * beta) - 1.0).inv())
        });
        let mut gen = Self {
            cfg: cfg.clone(),
            sys: sys.clone(),
            coeff,
            inv_denom,
            scales: vec![0.0; width],
        };
        gen.set_powers(&cfg.power_per_carrier)?;
        Ok(gen)
    }

    fn set_powers(&mut self, powers: &[f64]) -> Result<()> {
        check_powers(self.cfg.band, powers)?;
        let q_count = self.sys.num_carriers;
        for (b, p) in powers.iter().enumerate() {
            let energy: f64 = self.coeff.column(b).iter().map(|c| c.norm_sqr()).sum();
            if *p > 0.0 && !(energy > 1e-18 * (q_count * q_count) as f64) {
                return Err(SenseError::Degenerate(format!(
                    "no tone leaks into carrier {}",
                    self.cfg.band.0 + b
                )));
            }
            self.scales[b] = if *p > 0.0 { (p / energy).sqrt() } else { 0.0 };
        }
        self.cfg.power_per_carrier = powers.to_vec();
        Ok(())
    }

    pub fn with_powers(&self, powers: &[f64]) -> Result<Self> {
        let mut g = self.clone();
        g.set_powers(powers)?;
        Ok(g)
    }

    pub fn config(&self) -> &TonalPuConfig {
        &self.cfg
    }

    fn draw_symbol<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex64 {
        let zeta = match self.cfg.fading {
            Fading::Rayleigh => complex_normal(rng, 1.0),
            Fading::None => Complex64::new(1.0, 0.0),
        };
        let m = self.cfg.psk_order;
        let x = Complex64::from_polar(
            1.0,
            2.0 * PI * (rng.random_range(0..m) as f64 + 0.5) / m as f64,
        );
        zeta * x
    }

    /// One block of `I_q(n)` over the band.
    ///
    /// The OFDM frame origin `t0` is uniform over one PU symbol and the
    /// carrier phase `φ` uniform over `[0, 2π)`. OFDM symbols that straddle
    /// a PU symbol boundary take each sample from the PU symbol it falls in.
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> PuContribution {
        let sys = &self.sys;
        let cfg = &self.cfg;
        let (q_count, n_count, k_count) = (sys.num_carriers, sys.num_symbols, cfg.num_tones);
        let width = self.scales.len();
        let t_s = sys.symbol_duration;
        let t_i = cfg.symbol_duration;
        let t_d = t_s / q_count as f64;

        let t0 = rng.random::<f64>() * t_i;
        let phi = rng.random::<f64>() * 2.0 * PI;
        let last_symbol = ((n_count as f64 * t_s + t0) / t_i).floor() as usize;
        let amplitudes: Vec<Vec<Complex64>> = (0..=last_symbol)
            .map(|_| (0..k_count).map(|_| self.draw_symbol(rng)).collect())
            .collect();

        let f_i_cycles_per_symbol = (cfg.carrier_freq * t_i).fract();
        // θ(n, l, k) = 2π[(nT_s + t0)(f_i + k/T_i) − l f_i T_i] + φ
        let phases = |start: f64, l: usize, out: &mut Vec<Complex64>| {
            out.clear();
            let base =
                (start * cfg.carrier_freq).fract() - (l as f64 * f_i_cycles_per_symbol).fract();
            let step = (start / t_i).fract();
            let first = Complex64::from_polar(1.0, 2.0 * PI * base + phi);
            let rot = Complex64::from_polar(1.0, 2.0 * PI * step);
            let mut cur = first;
            for k in 0..k_count {
                if k % 64 == 0 && k > 0 {
                    // re-anchor the recurrence to keep rounding bounded
                    cur = Complex64::from_polar(
                        1.0,
                        2.0 * PI * (base + (k as f64 * step).fract()) + phi,
                    );
                }
                out.push(cur);
                cur *= rot;
            }
        };

        let mut values = DMatrix::<Complex64>::zeros(width, n_count);
        let mut rot = Vec::with_capacity(k_count);
        let mut u = vec![Complex64::new(0.0, 0.0); k_count];
        for n in 0..n_count {
            let start = n as f64 * t_s + t0;
            let l = (start / t_i).floor() as usize;
            let boundary = (l + 1) as f64 * t_i;
            // first sample index that belongs to PU symbol l + 1
            let split = ((boundary - start) / t_d).ceil().max(0.0) as usize;
            phases(start, l, &mut rot);
            for k in 0..k_count {
                u[k] = amplitudes[l][k] * rot[k];
            }
            if split >= q_count {
                for b in 0..width {
                    let col = self.coeff.column(b);
                    let s: Complex64 = u.iter().zip(col.iter()).map(|(a, c)| a * c).sum();
                    values[(b, n)] = s * self.scales[b];
                }
            } else {
                let mut v = vec![Complex64::new(0.0, 0.0); k_count];
                phases(start, l + 1, &mut rot);
                for k in 0..k_count {
                    v[k] = amplitudes[l + 1][k] * rot[k];
                }
                // exp(j2πβ·split) factors into a tone term and a carrier term
                let offset = (cfg.carrier_freq - sys.carrier_freq) * t_s;
                let tone_step = t_s / t_i;
                let tone_phase: Vec<Complex64> = (0..k_count)
                    .map(|k| {
                        let cycles = (k as f64 * tone_step * split as f64 / q_count as f64).fract();
                        Complex64::from_polar(1.0, 2.0 * PI * cycles)
                    })
                    .collect();
                for b in 0..width {
                    let q = (cfg.band.0 + b) as f64;
                    let cycles = ((offset - q) * split as f64 / q_count as f64).fract();
                    let carrier_phase = Complex64::from_polar(1.0, 2.0 * PI * cycles);
                    let mut s = Complex64::new(0.0, 0.0);
                    for k in 0..k_count {
                        let head = match self.inv_denom[(k, b)] {
                            Some(d) => (carrier_phase * tone_phase[k] - 1.0) * d,
                            None => Complex64::new(split as f64, 0.0),
                        };
                        s += v[k] * self.coeff[(k, b)] + (u[k] - v[k]) * head;
                    }
                    values[(b, n)] = s * self.scales[b];
                }
            }
        }
        PuContribution {
            first_carrier: cfg.band.0,
            values,
        }
    }
}

/// Draws one tonal PU block. Builds a [`TonalGenerator`] on every call; reuse
/// one directly for repeated draws.
pub fn generate_tonal<R: Rng + ?Sized>(
    cfg: &TonalPuConfig,
    sys: &OfdmConfig,
    rng: &mut R,
) -> Result<PuContribution> {
    Ok(TonalGenerator::new(cfg, sys)?.generate(rng))
}
