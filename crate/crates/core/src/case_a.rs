//! Case A: the PU covariance model and band are known.
//!
//! Each band carrier runs the locally most powerful test
//! `T_A(Y_q) = Y_q† C_q Y_q > γ_q` at false-alarm rate
//! `α_q = 1 − (1 − α)^{1/B_PU}`, and the per-carrier decisions are OR-fused
//! so the overall false-alarm rate is `α`. Energy and estimator-correlator
//! statistics are provided as baselines.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::numerics::rng::{stream, trial_stream_id};
use crate::numerics::{complex_normal, gaussian_q_inv, upper_quantile};
use crate::ofdm::ObservationBlock;
use crate::pu_models::NormalizedCovariance;
use crate::{Result, SenseError};

/// How per-carrier thresholds are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Calibration {
    /// Gaussian approximation of `T_A` under noise only.
    AsymptoticGaussian,
    /// Quantile of simulated noise-only statistics.
    EmpiricalHistogram { trials: usize },
}

impl Default for Calibration {
    fn default() -> Self {
        Calibration::EmpiricalHistogram { trials: 100_000 }
    }
}

impl Calibration {
    pub fn name(&self) -> &'static str {
        match self {
            Calibration::AsymptoticGaussian => "asymptotic_gaussian",
            Calibration::EmpiricalHistogram { .. } => "empirical_histogram",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseAConfig {
    pub band: (usize, usize),
    /// Overall false-alarm target.
    pub alpha: f64,
    #[serde(default)]
    pub calibration: Calibration,
    /// Known noise variance `σ_W²`.
    pub noise_var: f64,
}

impl CaseAConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(SenseError::config(format!(
                "alpha must be in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.band.0 > self.band.1 {
            return Err(SenseError::config(format!("empty band {:?}", self.band)));
        }
        if !(self.noise_var > 0.0 && self.noise_var.is_finite()) {
            return Err(SenseError::config("noise variance must be positive"));
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.band.1 - self.band.0 + 1
    }
}

/// Which per-carrier statistic a detector computes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Energy,
    Lmp,
    EstimatorCorrelator,
}

impl Statistic {
    pub const ALL: [Statistic; 3] = [
        Statistic::Energy,
        Statistic::Lmp,
        Statistic::EstimatorCorrelator,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Statistic::Energy => "energy",
            Statistic::Lmp => "lmp",
            Statistic::EstimatorCorrelator => "estimator_correlator",
        }
    }

    /// Evaluates the statistic; `power` is only used by the
    /// estimator-correlator.
    pub fn evaluate(
        &self,
        y: &DVector<Complex64>,
        c: &NormalizedCovariance,
        power: f64,
        noise_var: f64,
    ) -> Result<f64> {
        match self {
            Statistic::Energy => Ok(energy_statistic(y)),
            Statistic::Lmp => lmp_statistic(y, c),
            Statistic::EstimatorCorrelator => {
                estimator_correlator_statistic(y, c, power, noise_var)
            }
        }
    }
}

fn check_dim(y: &DVector<Complex64>, c: &NormalizedCovariance) -> Result<()> {
    if y.len() != c.dim() {
        return Err(SenseError::config(format!(
            "observation length {} does not match covariance size {}",
            y.len(),
            c.dim()
        )));
    }
    Ok(())
}

/// `T_A(y) = y† C y`.
pub fn lmp_statistic(y: &DVector<Complex64>, c: &NormalizedCovariance) -> Result<f64> {
    check_dim(y, c)?;
    Ok(c.quadratic_form(y))
}

/// `‖y‖²`.
pub fn energy_statistic(y: &DVector<Complex64>) -> f64 {
    y.norm_squared()
}

/// `σ⁻² P y† C (P C + σ² I)⁻¹ y`, the likelihood-ratio statistic when the
/// PU power `P` is known.
pub fn estimator_correlator_statistic(
    y: &DVector<Complex64>,
    c: &NormalizedCovariance,
    power: f64,
    noise_var: f64,
) -> Result<f64> {
    check_dim(y, c)?;
    if !(power >= 0.0 && power.is_finite()) {
        return Err(SenseError::domain(format!(
            "PU power must be >= 0, got {power}"
        )));
    }
    if !(noise_var > 0.0) {
        return Err(SenseError::domain("noise variance must be positive"));
    }
    let e = c.eigen();
    Ok(e.projections(y)
        .iter()
        .zip(e.values.iter())
        .map(|(p, l)| {
            let pl = power * l.max(0.0);
            pl / (pl + noise_var) * p / noise_var
        })
        .sum())
}

/// Per-carrier false-alarm rate `1 − (1 − α)^{1/B}` that fuses to `α`.
pub fn per_carrier_alpha(alpha: f64, width: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) || width == 0 {
        return Err(SenseError::domain(format!(
            "need 0 < alpha < 1 and a nonempty band (alpha {alpha}, width {width})"
        )));
    }
    // 1 − exp(ln(1−α)/B), accurate for tiny α
    Ok(-((1.0 - alpha).ln() / width as f64).exp_m1())
}

/// Threshold `γ_q` with `P(T_A > γ_q | H0) = α_q`.
///
/// `seed` and `stream` address the random draws of the empirical method and
/// are ignored by the asymptotic one. Empirical thresholds are simulated at
/// unit noise variance and scaled by `noise_var`.
pub fn calibrate_threshold(
    c: &NormalizedCovariance,
    noise_var: f64,
    alpha_q: f64,
    method: Calibration,
    seed: u64,
    stream_point: u32,
) -> Result<f64> {
    if !(alpha_q > 0.0 && alpha_q < 1.0) {
        return Err(SenseError::domain(format!(
            "alpha_q must be in (0, 1), got {alpha_q}"
        )));
    }
    if !(noise_var > 0.0) {
        return Err(SenseError::domain("noise variance must be positive"));
    }
    match method {
        Calibration::AsymptoticGaussian => {
            let n = c.dim() as f64;
            Ok(noise_var * n + noise_var * c.trace_of_square().sqrt() * gaussian_q_inv(alpha_q)?)
        }
        Calibration::EmpiricalHistogram { trials } => {
            let needed = (50.0 / alpha_q).ceil();
            if (trials as f64) < needed {
                return Err(SenseError::Calibration(format!(
                    "{trials} trials cannot resolve alpha_q = {alpha_q:.3e}; need at least {needed}"
                )));
            }
            let mut samples = h0_lmp_samples(c, trials, seed, stream_point);
            Ok(noise_var * upper_quantile(&mut samples, alpha_q)?)
        }
    }
}

/// Noise-only LMP statistics at unit noise variance, `Σ λ_i |w_i|²`.
pub fn h0_lmp_samples(
    c: &NormalizedCovariance,
    trials: usize,
    seed: u64,
    stream_point: u32,
) -> Vec<f64> {
    let values = c.eigen().values.clone();
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(seed, trial_stream_id(stream_point, t as u32));
            values
                .iter()
                .map(|l| l * complex_normal(&mut rng, 1.0).norm_sqr())
                .sum()
        })
        .collect()
}

/// Mean and variance of `T_A` when `Y_q ~ CN(0, P C + σ² I)`:
/// `tr(C(PC + σ²I))` and `tr((C(PC + σ²I))²)`.
pub fn asymptotic_h1_moments(
    c: &NormalizedCovariance,
    power: f64,
    noise_var: f64,
) -> Result<(f64, f64)> {
    if !(power >= 0.0) {
        return Err(SenseError::domain(format!(
            "PU power must be >= 0, got {power}"
        )));
    }
    let (mut mean, mut var) = (0.0, 0.0);
    for l in c.eigen().values.iter() {
        let m = l * (power * l + noise_var);
        mean += m;
        var += m * m;
    }
    Ok((mean, var))
}

/// One row of a threshold table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEntry {
    pub q: usize,
    pub alpha_q: f64,
    pub method: String,
    pub seed: u64,
    pub threshold: f64,
}

/// Calibrated thresholds, persisted as CSV `q,alpha_q,method,seed,threshold`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ThresholdTable {
    pub entries: Vec<ThresholdEntry>,
}

impl ThresholdTable {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for e in &self.entries {
            w.serialize(e)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let entries = r
            .deserialize()
            .collect::<std::result::Result<Vec<ThresholdEntry>, _>>()?;
        Ok(Self { entries })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    /// Threshold for carrier `q` at `alpha_q` by `method`.
    pub fn lookup(&self, q: usize, alpha_q: f64, method: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| {
                e.q == q && e.method == method && (e.alpha_q - alpha_q).abs() <= 1e-12 * alpha_q
            })
            .map(|e| e.threshold)
    }
}

/// Per-carrier statistics, thresholds and decisions over the band.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectorReport {
    pub band: (usize, usize),
    pub statistics: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub decisions: Vec<bool>,
    pub fused: bool,
}

impl DetectorReport {
    pub fn from_parts(band: (usize, usize), statistics: Vec<f64>, thresholds: Vec<f64>) -> Self {
        let decisions: Vec<bool> = statistics
            .iter()
            .zip(&thresholds)
            .map(|(t, g)| t > g)
            .collect();
        let fused = decisions.iter().any(|&d| d);
        Self {
            band,
            statistics,
            thresholds,
            decisions,
            fused,
        }
    }
}

/// Calibrated band detector. Thresholds are stored at unit noise variance
/// and scaled to the configured one.
#[derive(Debug, Clone)]
pub struct CaseADetector {
    cfg: CaseAConfig,
    covariances: Vec<NormalizedCovariance>,
    unit_thresholds: Vec<f64>,
}

impl CaseADetector {
    /// Orders `covariances` by band carrier and checks that each is present.
    fn arrange(
        cfg: &CaseAConfig,
        covariances: &[NormalizedCovariance],
    ) -> Result<Vec<NormalizedCovariance>> {
        cfg.validate()?;
        (cfg.band.0..=cfg.band.1)
            .map(|q| {
                covariances
                    .iter()
                    .find(|c| c.carrier() == q)
                    .cloned()
                    .ok_or_else(|| {
                        SenseError::config(format!("no covariance supplied for carrier {q}"))
                    })
            })
            .collect()
    }

    pub fn calibrate(
        cfg: &CaseAConfig,
        covariances: &[NormalizedCovariance],
        seed: u64,
    ) -> Result<Self> {
        let covs = Self::arrange(cfg, covariances)?;
        let alpha_q = per_carrier_alpha(cfg.alpha, cfg.width())?;
        let unit_thresholds = covs
            .iter()
            .map(|c| {
                calibrate_threshold(c, 1.0, alpha_q, cfg.calibration, seed, c.carrier() as u32)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            cfg: cfg.clone(),
            covariances: covs,
            unit_thresholds,
        })
    }

    /// Uses thresholds from `table`, which must hold every band carrier at
    /// the configured method and per-carrier rate. Table thresholds are
    /// taken to be at unit noise variance.
    pub fn from_table(
        cfg: &CaseAConfig,
        covariances: &[NormalizedCovariance],
        table: &ThresholdTable,
    ) -> Result<Self> {
        let covs = Self::arrange(cfg, covariances)?;
        let alpha_q = per_carrier_alpha(cfg.alpha, cfg.width())?;
        let unit_thresholds = covs
            .iter()
            .map(|c| {
                table
                    .lookup(c.carrier(), alpha_q, cfg.calibration.name())
                    .ok_or_else(|| {
                        SenseError::config(format!(
                        "threshold table has no {} entry for carrier {} at alpha_q {alpha_q:.6e}",
                        cfg.calibration.name(),
                        c.carrier()
                    ))
                    })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            cfg: cfg.clone(),
            covariances: covs,
            unit_thresholds,
        })
    }

    pub fn config(&self) -> &CaseAConfig {
        &self.cfg
    }

    pub fn thresholds(&self) -> Vec<f64> {
        self.unit_thresholds
            .iter()
            .map(|g| g * self.cfg.noise_var)
            .collect()
    }

    /// Unit-noise thresholds as a table tagged with `seed`.
    pub fn table(&self, seed: u64) -> ThresholdTable {
        let alpha_q = per_carrier_alpha(self.cfg.alpha, self.cfg.width()).unwrap_or(f64::NAN);
        ThresholdTable {
            entries: self
                .covariances
                .iter()
                .zip(&self.unit_thresholds)
                .map(|(c, g)| ThresholdEntry {
                    q: c.carrier(),
                    alpha_q,
                    method: self.cfg.calibration.name().to_string(),
                    seed,
                    threshold: *g,
                })
                .collect(),
        }
    }

    pub fn detect(&self, obs: &ObservationBlock) -> Result<DetectorReport> {
        let (q0, q1) = self.cfg.band;
        if q1 >= obs.y.nrows() {
            return Err(SenseError::config(format!(
                "band {:?} exceeds {} carriers",
                self.cfg.band,
                obs.y.nrows()
            )));
        }
        let statistics = (q0..=q1)
            .zip(&self.covariances)
            .map(|(q, c)| lmp_statistic(&obs.carrier(q), c))
            .collect::<Result<_>>()?;
        Ok(DetectorReport::from_parts(
            self.cfg.band,
            statistics,
            self.thresholds(),
        ))
    }
}

/// Calibrates thresholds for `cfg` and runs the OR-fused LMP test once.
pub fn detect_band(
    obs: &ObservationBlock,
    covariances: &[NormalizedCovariance],
    cfg: &CaseAConfig,
    seed: u64,
) -> Result<DetectorReport> {
    CaseADetector::calibrate(cfg, covariances, seed)?.detect(obs)
}
