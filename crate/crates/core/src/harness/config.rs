//! Campaign configuration, read from TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::case_a::Calibration;
use crate::ofdm::{OfdmConfig, PowerProfile};
use crate::pu_models::{ArPuConfig, Fading, PuModel, TonalPuConfig};
use crate::{Result, SenseError};

/// Experiment a campaign reproduces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Energy, LMP and estimator-correlator ROC at one carrier.
    CaseARoc,
    /// Matched-subspace detection and false alarm on a known band.
    CaseBRoc,
    /// Matched-subspace detection probability over the SNR grid.
    CaseBPdVsSnr,
    /// Band-search hit rate.
    CaseCHitRate,
    /// Band search followed by the F test, under H0 and H1.
    CaseCEndToEnd,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::CaseARoc => "case_a_roc",
            Scenario::CaseBRoc => "case_b_roc",
            Scenario::CaseBPdVsSnr => "case_b_pd_vs_snr",
            Scenario::CaseCHitRate => "case_c_hit_rate",
            Scenario::CaseCEndToEnd => "case_c_end_to_end",
        }
    }
}

/// Primary-user signal model. The band and powers come from the campaign
/// grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PuSpec {
    Tonal {
        /// PU symbol duration `T_i` in seconds.
        #[serde(default = "default_pu_symbol_duration")]
        symbol_duration: f64,
        /// PU carrier frequency `f_i` in Hz, the frequency of the first tone.
        #[serde(default = "default_pu_carrier_freq")]
        carrier_freq: f64,
        /// Number of tones. When absent, enough tones to span the band.
        #[serde(default)]
        num_tones: Option<usize>,
        #[serde(default)]
        fading: Fading,
        #[serde(default = "default_psk_order")]
        psk_order: usize,
    },
    Ar {
        coefficients: Vec<f64>,
        #[serde(default)]
        burn_in: Option<usize>,
    },
}

fn default_pu_symbol_duration() -> f64 {
    26.6e-6
}

fn default_pu_carrier_freq() -> f64 {
    3.36e9
}

fn default_psk_order() -> usize {
    4
}

impl Default for PuSpec {
    fn default() -> Self {
        PuSpec::Tonal {
            symbol_duration: default_pu_symbol_duration(),
            carrier_freq: default_pu_carrier_freq(),
            num_tones: None,
            fading: Fading::default(),
            psk_order: default_psk_order(),
        }
    }
}

impl PuSpec {
    /// Concrete model over `band` with `power` at every carrier.
    pub fn model(&self, sys: &OfdmConfig, band: (usize, usize), power: f64) -> Result<PuModel> {
        sys.check_band(band)?;
        Ok(match self {
            PuSpec::Tonal {
                symbol_duration,
                carrier_freq,
                num_tones,
                fading,
                psk_order,
            } => {
                let mut cfg = TonalPuConfig::covering_band(sys, band, *symbol_duration, power);
                cfg.carrier_freq = *carrier_freq;
                if let Some(k) = num_tones {
                    cfg.num_tones = *k;
                }
                cfg.fading = *fading;
                cfg.psk_order = *psk_order;
                cfg.validate(sys)?;
                PuModel::Tonal(cfg)
            }
            PuSpec::Ar {
                coefficients,
                burn_in,
            } => {
                let mut cfg = ArPuConfig::new(coefficients.clone(), band, power);
                cfg.burn_in = *burn_in;
                cfg.validate(sys)?;
                PuModel::Ar(cfg)
            }
        })
    }
}

/// Channel between the PU and the sensing receiver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelSpec {
    /// Equal received power on every band carrier.
    #[default]
    Flat,
    /// Rayleigh tapped delay line; the band's power profile follows `|G_q|²`
    /// normalized to unit mean over the band.
    Multipath {
        #[serde(default = "default_paths")]
        paths: usize,
        #[serde(default = "default_profile")]
        profile: PowerProfile,
        /// Redraw until the weakest band carrier is below this fraction of
        /// the band mean.
        #[serde(default)]
        notch_depth: Option<f64>,
        #[serde(default = "default_max_redraws")]
        max_redraws: usize,
    },
}

impl ChannelSpec {
    /// Eight equal-power Rayleigh paths, no notch requirement.
    pub fn multipath() -> Self {
        ChannelSpec::Multipath {
            paths: default_paths(),
            profile: default_profile(),
            notch_depth: None,
            max_redraws: default_max_redraws(),
        }
    }
}

fn default_paths() -> usize {
    8
}

fn default_profile() -> PowerProfile {
    PowerProfile::Uniform
}

fn default_max_redraws() -> usize {
    10_000
}

/// Cognitive user transmitting during sensing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CuSpec {
    /// CU-to-noise power ratio at every carrier, in dB.
    pub snr_db: f64,
    /// Variance of the channel-estimate error relative to `|H_q|²`.
    #[serde(default)]
    pub estimate_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseASpec {
    /// Offset of the tested carrier from the first band carrier.
    #[serde(default)]
    pub carrier_offset: usize,
    /// Threshold method used by `calibrate`.
    #[serde(default)]
    pub calibration: Calibration,
}

impl Default for CaseASpec {
    fn default() -> Self {
        Self {
            carrier_offset: 0,
            calibration: Calibration::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub scenario: Scenario,
    #[serde(default)]
    pub seed: u64,
    /// Monte-Carlo trials per point (per hypothesis where both are run).
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// PU-to-noise power ratios in dB.
    #[serde(default = "default_snr")]
    pub snr_db: Vec<f64>,
    /// False-alarm targets; ROC grid points for `case_a_roc`.
    #[serde(default = "default_alpha")]
    pub alpha: Vec<f64>,
    /// PU bandwidths in carriers.
    #[serde(default = "default_b_pu")]
    pub b_pu: Vec<usize>,
    /// Subspace polynomial orders.
    #[serde(default = "default_order")]
    pub order: Vec<usize>,
    /// Observation lengths; empty means `system.num_symbols`.
    #[serde(default)]
    pub num_symbols: Vec<usize>,
    /// First carrier of the PU band.
    #[serde(default = "default_band_start")]
    pub band_start: usize,
    /// Edge tolerance of a band-search hit, in carriers.
    #[serde(default = "default_hit_tolerance")]
    pub hit_tolerance: usize,
    /// Search the band on the first half of the symbols and test on the
    /// second half.
    #[serde(default)]
    pub split_halves: bool,
    #[serde(default)]
    pub system: OfdmConfig,
    #[serde(default)]
    pub pu: PuSpec,
    #[serde(default)]
    pub channel: ChannelSpec,
    #[serde(default)]
    pub cu: Option<CuSpec>,
    #[serde(default)]
    pub case_a: CaseASpec,
}

fn default_trials() -> usize {
    1000
}

fn default_snr() -> Vec<f64> {
    vec![0.0]
}

fn default_alpha() -> Vec<f64> {
    vec![0.1]
}

fn default_b_pu() -> Vec<usize> {
    vec![10]
}

fn default_order() -> Vec<usize> {
    vec![0]
}

fn default_band_start() -> usize {
    81
}

fn default_hit_tolerance() -> usize {
    1
}

impl CampaignConfig {
    /// Defaults for `scenario`, sized after the corresponding experiment.
    pub fn new(scenario: Scenario) -> Self {
        let base = Self::base(scenario);
        match scenario {
            Scenario::CaseARoc => Self {
                snr_db: vec![0.0, -2.0],
                alpha: vec![0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5],
                b_pu: vec![1],
                ..base
            },
            Scenario::CaseBRoc => Self {
                alpha: vec![0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5],
                b_pu: vec![10, 20],
                order: vec![0, 1],
                num_symbols: vec![70],
                channel: ChannelSpec::multipath(),
                ..base
            },
            Scenario::CaseBPdVsSnr => Self {
                snr_db: vec![-8.0, -6.0, -4.0, -2.0, 0.0],
                b_pu: vec![10, 20],
                order: vec![0, 1],
                num_symbols: vec![70],
                channel: ChannelSpec::multipath(),
                cu: Some(CuSpec {
                    snr_db: 8.0,
                    estimate_error: 0.0,
                }),
                ..base
            },
            Scenario::CaseCHitRate => Self {
                snr_db: vec![-3.0, -2.0, -1.0, 0.0, 1.0, 2.0],
                b_pu: vec![5, 10, 20],
                num_symbols: vec![70],
                ..base
            },
            Scenario::CaseCEndToEnd => Self {
                snr_db: vec![0.0, 5.0],
                num_symbols: vec![70],
                ..base
            },
        }
    }

    fn base(scenario: Scenario) -> Self {
        Self {
            scenario,
            seed: 0,
            trials: default_trials(),
            snr_db: default_snr(),
            alpha: default_alpha(),
            b_pu: default_b_pu(),
            order: default_order(),
            num_symbols: Vec::new(),
            band_start: default_band_start(),
            hit_tolerance: default_hit_tolerance(),
            split_halves: false,
            system: OfdmConfig::default(),
            pu: PuSpec::default(),
            channel: ChannelSpec::default(),
            cu: None,
            case_a: CaseASpec::default(),
        }
    }

    /// Parses a TOML campaign. Keys left out take the defaults of the
    /// named scenario (see [`CampaignConfig::new`]).
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let bad = |e: &dyn std::fmt::Display| SenseError::config(e.to_string());
        let user: toml::Table = toml::from_str(text).map_err(|e| bad(&e))?;
        let scenario: Scenario = user
            .get("scenario")
            .ok_or_else(|| SenseError::config("missing key `scenario`"))?
            .clone()
            .try_into()
            .map_err(|e| bad(&e))?;
        let mut merged = toml::Table::try_from(Self::new(scenario)).map_err(|e| bad(&e))?;
        overlay(&mut merged, user);
        let cfg: Self = merged.try_into().map_err(|e| bad(&e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| SenseError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| SenseError::config(e.to_string()))
    }

    /// Observation lengths to sweep.
    pub fn lengths(&self) -> Vec<usize> {
        if self.num_symbols.is_empty() {
            vec![self.system.num_symbols]
        } else {
            self.num_symbols.clone()
        }
    }

    /// PU band of width `b`.
    pub fn band(&self, b: usize) -> (usize, usize) {
        (self.band_start, self.band_start + b - 1)
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        if self.trials < 1 {
            return Err(SenseError::config("trials must be >= 1"));
        }
        if self.trials > u32::MAX as usize {
            return Err(SenseError::config("trials must fit in 32 bits"));
        }
        if self.snr_db.is_empty() || self.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(SenseError::config(
                "snr_db must be a non-empty list of finite values",
            ));
        }
        if self.alpha.is_empty() || self.alpha.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return Err(SenseError::config("alpha values must lie in (0, 1)"));
        }
        if self.order.is_empty() {
            return Err(SenseError::config("order grid is empty"));
        }
        if self.b_pu.is_empty() {
            return Err(SenseError::config("b_pu grid is empty"));
        }
        for &b in &self.b_pu {
            if b < 1 {
                return Err(SenseError::config("b_pu values must be >= 1"));
            }
            self.system.check_band(self.band(b))?;
        }
        if self.lengths().iter().any(|&n| n < 1) {
            return Err(SenseError::config("num_symbols values must be >= 1"));
        }
        if self.split_halves && self.lengths().iter().any(|&n| n < 2) {
            return Err(SenseError::config("split_halves needs at least 2 symbols"));
        }
        if let ChannelSpec::Multipath {
            paths,
            notch_depth,
            max_redraws,
            ..
        } = &self.channel
        {
            if *paths < 1 || *paths > self.system.num_carriers {
                return Err(SenseError::config(format!(
                    "paths must be in [1, {}]",
                    self.system.num_carriers
                )));
            }
            if let Some(d) = notch_depth {
                if !(*d > 0.0 && *d <= 1.0) {
                    return Err(SenseError::config("notch_depth must lie in (0, 1]"));
                }
            }
            if *max_redraws < 1 {
                return Err(SenseError::config("max_redraws must be >= 1"));
            }
        }
        if let Some(cu) = &self.cu {
            if !cu.snr_db.is_finite()
                || !(cu.estimate_error >= 0.0 && cu.estimate_error.is_finite())
            {
                return Err(SenseError::config(
                    "cu snr_db must be finite and estimate_error >= 0",
                ));
            }
        }
        if self.scenario == Scenario::CaseARoc {
            if let Some(&b) = self.b_pu.iter().find(|&&b| self.case_a.carrier_offset >= b) {
                return Err(SenseError::config(format!(
                    "case_a carrier_offset {} is outside a band of {b}",
                    self.case_a.carrier_offset
                )));
            }
        }
        // Reject PU settings that cannot build a model at unit power.
        for &b in &self.b_pu {
            self.pu.model(&self.system, self.band(b), 1.0)?;
        }
        Ok(())
    }
}

/// Writes `top` over `base`, merging nested tables key by key. A table
/// whose `kind` differs from the base replaces it whole.
fn overlay(base: &mut toml::Table, top: toml::Table) {
    for (key, value) in top {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t))
                if t.get("kind").is_none_or(|k| b.get("kind") == Some(k)) =>
            {
                overlay(b, t)
            }
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}

/// `10^(dB/10)`.
pub fn db_to_ratio(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}
