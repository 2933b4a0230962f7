//! Per-trial signal synthesis for campaigns.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::case_b::{build_observation, FrequencyObservation};
use crate::numerics::complex_normal;
use crate::ofdm::{
    generate_carriers, generate_channel, ChannelRealization, ObservationBlock, OfdmConfig,
    PuContribution,
};
use crate::pu_models::{PuGenerator, PuModel};
use crate::{Result, SenseError};

use super::config::{db_to_ratio, CampaignConfig, ChannelSpec, CuSpec};

/// Everything needed to draw one received block at a campaign point.
#[derive(Debug, Clone)]
pub struct Synthesizer {
    sys: OfdmConfig,
    band: (usize, usize),
    generator: Option<PuGenerator>,
    channel: ChannelSpec,
    cu: Option<CuSpec>,
    cu_channel: ChannelRealization,
}

/// One received block restricted to some carriers, with the matching
/// channel estimates when the CU is active.
#[derive(Debug, Clone)]
pub struct Received {
    pub rows: (usize, usize),
    pub y: DMatrix<Complex64>,
    pub h_est: Option<DMatrix<Complex64>>,
    pub noise_var: f64,
}

impl Received {
    /// Mean-subtracted periodogram over all rows, using symbols `cols`.
    pub fn spectrum(&self, cols: std::ops::Range<usize>) -> Result<FrequencyObservation> {
        let width = cols.end - cols.start;
        let block = ObservationBlock {
            y: self.y.columns(cols.start, width).into_owned(),
            config: OfdmConfig::default(),
        };
        let h = self
            .h_est
            .as_ref()
            .map(|h| h.columns(cols.start, width).into_owned());
        build_observation(&block, (0, self.y.nrows() - 1), h.as_ref(), self.noise_var)
    }

    /// Periodogram over every symbol.
    pub fn full_spectrum(&self) -> Result<Vec<f64>> {
        Ok(self.spectrum(0..self.y.ncols())?.z.as_slice().to_vec())
    }
}

impl Synthesizer {
    /// Point with PU band of width `b`, observation length `n` and PU power
    /// ratio `snr_db`; `None` draws noise (and CU) only.
    pub fn new(cfg: &CampaignConfig, n: usize, b: usize, snr_db: Option<f64>) -> Result<Self> {
        let mut sys = OfdmConfig {
            num_symbols: n,
            ..cfg.system.clone()
        };
        sys.cu_active = cfg.cu.is_some();
        sys.validate()?;
        let band = cfg.band(b);
        let generator = match snr_db {
            Some(db) => {
                let power = db_to_ratio(db) * sys.noise_var;
                Some(cfg.pu.model(&sys, band, power)?.generator(&sys)?)
            }
            None => None,
        };
        let cu_channel = match &cfg.cu {
            Some(cu) => ChannelRealization::flat(&sys)
                .scaled((db_to_ratio(cu.snr_db) * sys.noise_var).sqrt()),
            None => ChannelRealization::flat(&sys),
        };
        Ok(Self {
            sys,
            band,
            generator,
            channel: cfg.channel.clone(),
            cu: cfg.cu.clone(),
            cu_channel,
        })
    }

    pub fn system(&self) -> &OfdmConfig {
        &self.sys
    }

    pub fn band(&self) -> (usize, usize) {
        self.band
    }

    /// PU power profile over the band, unit mean.
    pub fn band_gains<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        band_gains(&self.sys, self.band, &self.channel, rng)
    }

    fn pu<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Option<PuContribution>> {
        let Some(gen) = &self.generator else {
            return Ok(None);
        };
        let gains = self.band_gains(rng)?;
        let mut pu = gen.generate(rng);
        for (b, g) in gains.iter().enumerate() {
            let s = g.sqrt();
            pu.values.row_mut(b).iter_mut().for_each(|v| *v *= s);
        }
        Ok(Some(pu))
    }

    /// Draws rows `rows` of one block. Draw order: channel, PU, CU symbols
    /// and noise, channel-estimate error.
    pub fn receive<R: Rng + ?Sized>(&self, rows: (usize, usize), rng: &mut R) -> Result<Received> {
        let pu = self.pu(rng)?;
        let y = generate_carriers(&self.sys, rows, &self.cu_channel, pu.as_ref(), rng)?;
        let h_est = match &self.cu {
            Some(cu) => {
                let count = rows.1 - rows.0 + 1;
                let mut h = DMatrix::zeros(count, self.sys.num_symbols);
                for r in 0..count {
                    let truth = self.cu_channel.h[(rows.0 + r, 0)];
                    let err = if cu.estimate_error > 0.0 {
                        complex_normal(rng, cu.estimate_error * truth.norm_sqr())
                    } else {
                        Complex64::new(0.0, 0.0)
                    };
                    h.row_mut(r).fill(truth + err);
                }
                Some(h)
            }
            None => None,
        };
        Ok(Received {
            rows,
            y,
            h_est,
            noise_var: self.sys.noise_var,
        })
    }

    /// Draws every carrier of one block.
    pub fn receive_all<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Received> {
        self.receive((0, self.sys.num_carriers - 1), rng)
    }
}

/// `|G_q|²` over `band` normalized to unit mean, from one channel draw.
///
/// With a notch depth the channel is redrawn until the weakest band carrier
/// falls below that fraction of the band mean.
pub fn band_gains<R: Rng + ?Sized>(
    sys: &OfdmConfig,
    band: (usize, usize),
    spec: &ChannelSpec,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let width = band.1 - band.0 + 1;
    let ChannelSpec::Multipath {
        paths,
        profile,
        notch_depth,
        max_redraws,
    } = spec
    else {
        return Ok(vec![1.0; width]);
    };
    let one_symbol = OfdmConfig {
        num_symbols: 1,
        ..sys.clone()
    };
    for _ in 0..*max_redraws {
        let ch = generate_channel(&one_symbol, *paths, *profile, rng)?;
        let power = ch.power_response();
        let gains = &power[band.0..=band.1];
        let mean = gains.iter().sum::<f64>() / width as f64;
        if !(mean > 0.0) {
            continue;
        }
        let normalized: Vec<f64> = gains.iter().map(|g| g / mean).collect();
        let weakest = normalized.iter().cloned().fold(f64::INFINITY, f64::min);
        if notch_depth.is_none_or(|d| weakest < d) {
            return Ok(normalized);
        }
    }
    Err(SenseError::Numerical(format!(
        "no channel with the requested notch in {max_redraws} draws"
    )))
}

/// `model` narrowed to the single carrier `q` at `power`. The signal at
/// `q` has the same law as in the full band.
pub fn single_carrier(model: &PuModel, q: usize, power: f64) -> PuModel {
    match model {
        PuModel::Tonal(c) => {
            let mut c = c.clone();
            c.band = (q, q);
            c.power_per_carrier = vec![power];
            PuModel::Tonal(c)
        }
        PuModel::Ar(c) => {
            let mut c = c.clone();
            c.band = (q, q);
            c.power_per_carrier = vec![power];
            PuModel::Ar(c)
        }
    }
}
