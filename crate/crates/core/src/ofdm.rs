//! Post-DFT received signal of a cognitive OFDM system.
//!
//! At sub-carrier `q` and OFDM symbol `n` the receiver sees
//! `Y_q(n) = H_q(n) S_q(n) + I_q(n) + W_q(n)`: the cognitive user's own
//! PSK symbol through its channel, the primary-user contribution and
//! circular white Gaussian noise. The channel is block-static over the
//! observation, so `H_q(n) = H_q`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::numerics::complex_normal;
use crate::{Result, SenseError};

/// System constants of the cognitive OFDM receiver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OfdmConfig {
    /// Number of sub-carriers `Q`.
    pub num_carriers: usize,
    /// Observation length `N` in OFDM symbols.
    pub num_symbols: usize,
    /// OFDM symbol duration `T_s` in seconds.
    pub symbol_duration: f64,
    /// Carrier frequency `f_s` of the cognitive system in Hz.
    pub carrier_freq: f64,
    /// AWGN variance per complex sample.
    pub noise_var: f64,
    /// Whether the cognitive system transmits while sensing.
    pub cu_active: bool,
    /// PSK order of the cognitive user's symbols.
    pub psk_order: usize,
}

impl Default for OfdmConfig {
    fn default() -> Self {
        Self {
            num_carriers: 128,
            num_symbols: 80,
            symbol_duration: 312.5e-9,
            carrier_freq: 3.1e9,
            noise_var: 1.0,
            cu_active: false,
            psk_order: 4,
        }
    }
}

impl OfdmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_carriers < 2 {
            return Err(SenseError::config("need at least 2 sub-carriers"));
        }
        if self.num_symbols < 1 {
            return Err(SenseError::config("observation length must be >= 1 symbol"));
        }
        if !(self.symbol_duration > 0.0 && self.symbol_duration.is_finite()) {
            return Err(SenseError::config("symbol duration must be positive"));
        }
        if !(self.noise_var > 0.0 && self.noise_var.is_finite()) {
            return Err(SenseError::config("noise variance must be positive"));
        }
        if self.psk_order < 2 {
            return Err(SenseError::config("PSK order must be >= 2"));
        }
        Ok(())
    }

    /// Checks `[q0, q1]` is a non-empty range of valid carriers.
    pub fn check_band(&self, band: (usize, usize)) -> Result<()> {
        let (q0, q1) = band;
        if q0 > q1 || q1 >= self.num_carriers {
            return Err(SenseError::config(format!(
                "band [{q0}, {q1}] outside [0, {}]",
                self.num_carriers - 1
            )));
        }
        Ok(())
    }
}

/// One multipath tap: sample-spaced delay and complex gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    pub delay: usize,
    pub gain: Complex64,
}

/// Per-carrier frequency response `H_q(n)` and the taps that produced it.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub h: DMatrix<Complex64>,
    pub taps: Vec<Tap>,
}

impl ChannelRealization {
    /// Frequency response `H_q = Σ_l g_l exp(−j2π q d_l / Q)`, repeated over the block.
    pub fn from_taps(cfg: &OfdmConfig, taps: Vec<Tap>) -> Self {
        let q_count = cfg.num_carriers;
        let response: Vec<Complex64> = (0..q_count)
            .map(|q| {
                taps.iter()
                    .map(|t| {
                        let ang = -2.0 * PI * ((q * t.delay) % q_count) as f64 / q_count as f64;
                        t.gain * Complex64::from_polar(1.0, ang)
                    })
                    .sum()
            })
            .collect();
        let h = DMatrix::from_fn(q_count, cfg.num_symbols, |q, _| response[q]);
        Self { h, taps }
    }

    /// Single unit tap: `H_q = 1` everywhere.
    pub fn flat(cfg: &OfdmConfig) -> Self {
        Self::from_taps(
            cfg,
            vec![Tap {
                delay: 0,
                gain: Complex64::new(1.0, 0.0),
            }],
        )
    }

    /// Same realization with every gain multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            h: self.h.map(|z| z * factor),
            taps: self
                .taps
                .iter()
                .map(|t| Tap {
                    delay: t.delay,
                    gain: t.gain * factor,
                })
                .collect(),
        }
    }

    /// `|H_q|²` at each carrier (first symbol of the block).
    pub fn power_response(&self) -> Vec<f64> {
        self.h.column(0).iter().map(|z| z.norm_sqr()).collect()
    }
}

/// Power-delay profile of the tapped-delay-line channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PowerProfile {
    Uniform,
    /// Tap `l` has mean power proportional to `exp(−decay · l)`.
    Exponential {
        decay: f64,
    },
}

impl PowerProfile {
    fn weights(&self, num_paths: usize) -> Vec<f64> {
        let raw: Vec<f64> = match *self {
            PowerProfile::Uniform => vec![1.0; num_paths],
            PowerProfile::Exponential { decay } => {
                (0..num_paths).map(|l| (-decay * l as f64).exp()).collect()
            }
        };
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }
}

/// Draws a Rayleigh tapped-delay-line channel with unit mean total power.
pub fn generate_channel<R: Rng + ?Sized>(
    cfg: &OfdmConfig,
    num_paths: usize,
    profile: PowerProfile,
    rng: &mut R,
) -> Result<ChannelRealization> {
    cfg.validate()?;
    if num_paths < 1 || num_paths > cfg.num_carriers {
        return Err(SenseError::config(format!(
            "number of paths must be in [1, {}], got {num_paths}",
            cfg.num_carriers
        )));
    }
    if let PowerProfile::Exponential { decay } = profile {
        if !(decay >= 0.0 && decay.is_finite()) {
            return Err(SenseError::config(
                "exponential decay must be finite and >= 0",
            ));
        }
    }
    let taps = profile
        .weights(num_paths)
        .into_iter()
        .enumerate()
        .map(|(delay, w)| Tap {
            delay,
            gain: complex_normal(rng, w),
        })
        .collect();
    Ok(ChannelRealization::from_taps(cfg, taps))
}

/// Primary-user contribution `I_q(n)` over a contiguous band of carriers.
#[derive(Debug, Clone)]
pub struct PuContribution {
    /// First carrier `q0` of the band.
    pub first_carrier: usize,
    /// Rows are carriers `q0..=q1`, columns OFDM symbols.
    pub values: DMatrix<Complex64>,
}

impl PuContribution {
    pub fn band(&self) -> (usize, usize) {
        (
            self.first_carrier,
            self.first_carrier + self.values.nrows() - 1,
        )
    }

    /// Sample power `(1/N) Σ_n |I_q(n)|²` per band carrier.
    pub fn carrier_powers(&self) -> Vec<f64> {
        self.values
            .row_iter()
            .map(|r| r.iter().map(|z| z.norm_sqr()).sum::<f64>() / r.len() as f64)
            .collect()
    }
}

/// Received frequency-domain observation, `y[(q, n)] = Y_q(n)`.
#[derive(Debug, Clone)]
pub struct ObservationBlock {
    pub y: DMatrix<Complex64>,
    pub config: OfdmConfig,
}

impl ObservationBlock {
    /// `Y_q = [Y_q(0), ..., Y_q(N−1)]ᵀ`.
    pub fn carrier(&self, q: usize) -> DVector<Complex64> {
        self.y.row(q).transpose()
    }
}

fn psk_symbol<R: Rng + ?Sized>(order: usize, rng: &mut R) -> Complex64 {
    let k = rng.random_range(0..order);
    // Offset by half a step so QPSK lands on the diagonals.
    let ang = 2.0 * PI * (k as f64 + 0.5) / order as f64;
    Complex64::from_polar(1.0, ang)
}

/// Synthesizes `Y = H⊙S + I + W` for one sensing block.
///
/// `H⊙S` is omitted when the cognitive system is silent. Random draws are
/// consumed in a fixed order (CU symbols, then noise), so a given `rng`
/// state always produces the same block.
pub fn generate_observation<R: Rng + ?Sized>(
    cfg: &OfdmConfig,
    channel: &ChannelRealization,
    pu: Option<&PuContribution>,
    rng: &mut R,
) -> Result<ObservationBlock> {
    let y = generate_carriers(
        cfg,
        (0, cfg.num_carriers.saturating_sub(1)),
        channel,
        pu,
        rng,
    )?;
    Ok(ObservationBlock {
        y,
        config: cfg.clone(),
    })
}

/// Rows `q0..=q1` of the received block, drawn from the same model as
/// [`generate_observation`] but without synthesizing the other carriers.
///
/// The PU contribution may cover any carriers; only its overlap with the
/// requested rows is added.
pub fn generate_carriers<R: Rng + ?Sized>(
    cfg: &OfdmConfig,
    rows: (usize, usize),
    channel: &ChannelRealization,
    pu: Option<&PuContribution>,
    rng: &mut R,
) -> Result<DMatrix<Complex64>> {
    cfg.validate()?;
    cfg.check_band(rows)?;
    let (q_count, n_count) = (cfg.num_carriers, cfg.num_symbols);
    if let Some(pu) = pu {
        let (q0, q1) = pu.band();
        if pu.values.nrows() == 0 || q1 >= q_count || pu.values.ncols() != n_count {
            return Err(SenseError::config(format!(
                "PU contribution {}x{} at carrier {q0} does not fit a {q_count}x{n_count} block",
                pu.values.nrows(),
                pu.values.ncols()
            )));
        }
    }
    if cfg.cu_active && channel.h.shape() != (q_count, n_count) {
        return Err(SenseError::config(format!(
            "channel response is {:?}, expected ({q_count}, {n_count})",
            channel.h.shape()
        )));
    }

    let (r0, r1) = rows;
    let mut y = DMatrix::<Complex64>::zeros(r1 - r0 + 1, n_count);
    if cfg.cu_active {
        for n in 0..n_count {
            for q in r0..=r1 {
                y[(q - r0, n)] = channel.h[(q, n)] * psk_symbol(cfg.psk_order, rng);
            }
        }
    }
    if let Some(pu) = pu {
        let (p0, p1) = pu.band();
        for q in p0.max(r0)..=p1.min(r1) {
            for n in 0..n_count {
                y[(q - r0, n)] += pu.values[(q - p0, n)];
            }
        }
    }
    for n in 0..n_count {
        for q in r0..=r1 {
            y[(q - r0, n)] += complex_normal(rng, cfg.noise_var);
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::stream;

    fn quiet(n: usize, noise_var: f64) -> OfdmConfig {
        OfdmConfig {
            num_symbols: n,
            noise_var,
            ..OfdmConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(OfdmConfig::default().validate().is_ok());
        let bad = [
            OfdmConfig {
                num_carriers: 1,
                ..Default::default()
            },
            OfdmConfig {
                num_symbols: 0,
                ..Default::default()
            },
            OfdmConfig {
                symbol_duration: 0.0,
                ..Default::default()
            },
            OfdmConfig {
                noise_var: 0.0,
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(SenseError::Config(_))));
        }
        let cfg = OfdmConfig::default();
        assert!(cfg.check_band((3, 2)).is_err());
        assert!(cfg.check_band((0, 128)).is_err());
        assert!(cfg.check_band((127, 127)).is_ok());
    }

    #[test]
    fn pure_noise_power_and_circularity() {
        let cfg = quiet(800, 1.0);
        let ch = ChannelRealization::flat(&cfg);
        let obs = generate_observation(&cfg, &ch, None, &mut stream(1, 0)).unwrap();
        let m = obs.y.len() as f64;
        let power = obs.y.iter().map(|z| z.norm_sqr()).sum::<f64>() / m;
        assert!((power - 1.0).abs() < 0.02, "power {power}");
        // each part has variance 1/2; SE of a variance estimate is sqrt(2/m) * 1/2
        let se = (2.0 / m).sqrt() * 0.5;
        let vre = obs.y.iter().map(|z| z.re * z.re).sum::<f64>() / m;
        let vim = obs.y.iter().map(|z| z.im * z.im).sum::<f64>() / m;
        assert!((vre - 0.5).abs() < 3.0 * se, "re var {vre}");
        assert!((vim - 0.5).abs() < 3.0 * se, "im var {vim}");
    }

    #[test]
    fn deterministic_under_seed() {
        let cfg = OfdmConfig {
            cu_active: true,
            ..quiet(10, 0.5)
        };
        let ch = generate_channel(&cfg, 8, PowerProfile::Uniform, &mut stream(3, 1)).unwrap();
        let a = generate_observation(&cfg, &ch, None, &mut stream(3, 2)).unwrap();
        let b = generate_observation(&cfg, &ch, None, &mut stream(3, 2)).unwrap();
        assert_eq!(a.y, b.y);
        let c = generate_observation(&cfg, &ch, None, &mut stream(3, 3)).unwrap();
        assert_ne!(a.y, c.y);
    }

    #[test]
    fn energy_additivity() {
        // CU with unit-power channel, constant-modulus PU of power 2, noise 0.5
        let cfg = OfdmConfig {
            cu_active: true,
            ..quiet(20, 0.5)
        };
        let mut rng = stream(8, 0);
        let trials = 400;
        let mut total = 0.0;
        let mut count = 0.0;
        for _ in 0..trials {
            let ch = generate_channel(&cfg, 8, PowerProfile::Uniform, &mut rng).unwrap();
            let pu = PuContribution {
                first_carrier: 0,
                values: DMatrix::from_fn(cfg.num_carriers, cfg.num_symbols, |q, n| {
                    Complex64::from_polar(2f64.sqrt(), 0.37 * (q * 7 + n * 3) as f64)
                }),
            };
            let obs = generate_observation(&cfg, &ch, Some(&pu), &mut rng).unwrap();
            total += obs.y.iter().map(|z| z.norm_sqr()).sum::<f64>();
            count += obs.y.len() as f64;
        }
        let mean = total / count;
        assert!((mean - 3.5).abs() < 0.1, "mean energy {mean}");
    }

    #[test]
    fn pu_dimension_mismatch() {
        let cfg = quiet(10, 1.0);
        let ch = ChannelRealization::flat(&cfg);
        let too_long = PuContribution {
            first_carrier: 120,
            values: DMatrix::zeros(10, 10),
        };
        let wrong_n = PuContribution {
            first_carrier: 0,
            values: DMatrix::zeros(4, 9),
        };
        for pu in [too_long, wrong_n] {
            let r = generate_observation(&cfg, &ch, Some(&pu), &mut stream(0, 0));
            assert!(matches!(r, Err(SenseError::Config(_))));
        }
    }

    #[test]
    fn single_path_is_flat() {
        let cfg = quiet(4, 1.0);
        for seed in 0..20 {
            let ch =
                generate_channel(&cfg, 1, PowerProfile::Uniform, &mut stream(seed, 0)).unwrap();
            let p = ch.power_response();
            assert!(p
                .iter()
                .all(|&v| (v - p[0]).abs() < 1e-12 * p[0].max(1e-300)));
        }
    }

    #[test]
    fn eight_path_unit_mean_power() {
        let cfg = quiet(1, 1.0);
        let mut acc = vec![0.0; cfg.num_carriers];
        let reps = 10_000;
        let mut rng = stream(12, 0);
        for _ in 0..reps {
            let ch = generate_channel(&cfg, 8, PowerProfile::Uniform, &mut rng).unwrap();
            for (a, p) in acc.iter_mut().zip(ch.power_response()) {
                *a += p;
            }
        }
        // |H_q|² is exponential with mean 1, so the SE of each average is 0.01.
        for a in &acc {
            assert!((a / reps as f64 - 1.0).abs() < 0.05);
        }
        let grand = acc.iter().sum::<f64>() / (reps * cfg.num_carriers) as f64;
        assert!((grand - 1.0).abs() < 0.01, "grand mean {grand}");
    }

    #[test]
    fn zero_decay_equals_uniform() {
        let cfg = quiet(2, 1.0);
        let a = generate_channel(&cfg, 8, PowerProfile::Uniform, &mut stream(5, 5)).unwrap();
        let b = generate_channel(
            &cfg,
            8,
            PowerProfile::Exponential { decay: 0.0 },
            &mut stream(5, 5),
        )
        .unwrap();
        assert_eq!(a.h, b.h);
    }

    #[test]
    fn path_count_range() {
        let cfg = quiet(2, 1.0);
        for bad in [0, 129] {
            assert!(generate_channel(&cfg, bad, PowerProfile::Uniform, &mut stream(0, 0)).is_err());
        }
    }

    #[test]
    fn carrier_rows_match_full_block() {
        let cfg = OfdmConfig {
            cu_active: true,
            ..quiet(6, 0.7)
        };
        let ch = generate_channel(&cfg, 8, PowerProfile::Uniform, &mut stream(4, 0)).unwrap();
        let pu = PuContribution {
            first_carrier: 10,
            values: DMatrix::from_element(5, 6, Complex64::new(3.0, -1.0)),
        };
        let cfg_silent = OfdmConfig {
            cu_active: false,
            ..cfg.clone()
        };
        let full = generate_observation(&cfg_silent, &ch, Some(&pu), &mut stream(4, 1)).unwrap();
        let rows =
            generate_carriers(&cfg_silent, (0, 127), &ch, Some(&pu), &mut stream(4, 1)).unwrap();
        assert_eq!(full.y, rows);
        let part = generate_carriers(&cfg, (12, 20), &ch, Some(&pu), &mut stream(4, 2)).unwrap();
        assert_eq!(part.shape(), (9, 6));
        assert!(generate_carriers(&cfg, (5, 128), &ch, None, &mut stream(4, 2)).is_err());
    }

    #[test]
    fn psk_is_unit_modulus() {
        let mut rng = stream(0, 0);
        for order in [2, 4, 8] {
            for _ in 0..50 {
                assert!((psk_symbol(order, &mut rng).norm() - 1.0).abs() < 1e-15);
            }
        }
    }
}
