//! Campaign runner reproducing the sensing experiments, plus the file
//! formats used by the command-line tool.
//!
//! A campaign is described by a TOML [`CampaignConfig`]; [`run_campaign`]
//! returns one [`ResultRow`] per simulated point, which [`write_results`]
//! serializes as CSV with the header
//! `scenario,snr_db,alpha,b_pu,r,n,estimate,stderr,trials,seed`.

mod campaign;
mod config;
mod synth;

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::case_a::{CaseAConfig, CaseADetector, ThresholdTable};
use crate::case_b::{detect, CaseBDecision, SubspaceModel};
use crate::case_c::{trace_band_search, two_step_detect_spectrum, BandSearchTrace, TwoStepResult};
use crate::numerics::rng::{stream, trial_stream_id};
use crate::ofdm::{ObservationBlock, OfdmConfig};
use crate::{Result, SenseError};

pub use campaign::run_campaign;
pub use config::{db_to_ratio, CampaignConfig, CaseASpec, ChannelSpec, CuSpec, PuSpec, Scenario};
pub use synth::{band_gains, single_carrier, Received, Synthesizer};

/// Column order of the results CSV.
pub const RESULT_HEADER: &str = "scenario,snr_db,alpha,b_pu,r,n,estimate,stderr,trials,seed";

/// One campaign point. Columns that do not apply to a scenario are empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    /// Scenario name, suffixed with the detector or metric where a scenario
    /// reports several (`case_a_roc.lmp`, `case_c_hit_rate.exact`).
    pub scenario: String,
    /// PU-to-noise ratio; empty for noise-only points.
    pub snr_db: Option<f64>,
    pub alpha: Option<f64>,
    pub b_pu: Option<usize>,
    pub r: Option<usize>,
    pub n: usize,
    /// Detection, false-alarm or hit probability.
    pub estimate: f64,
    pub stderr: f64,
    pub trials: usize,
    pub seed: u64,
}

pub fn write_results<W: Write>(rows: &[ResultRow], writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(writer);
    w.write_record(RESULT_HEADER.split(','))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_results(rows: &[ResultRow], path: impl AsRef<Path>) -> Result<()> {
    write_results(rows, std::fs::File::create(path)?)
}

pub fn read_results<R: Read>(reader: R) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(reader);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != RESULT_HEADER {
        return Err(SenseError::config(format!(
            "unexpected results header {}",
            header.join(",")
        )));
    }
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Case A thresholds for every `(b_pu, alpha)` of the campaign, using the
/// configured calibration method.
pub fn calibration_table(cfg: &CampaignConfig) -> Result<ThresholdTable> {
    cfg.validate()?;
    let mut entries = Vec::new();
    for n in cfg.lengths() {
        let sys = OfdmConfig {
            num_symbols: n,
            ..cfg.system.clone()
        };
        for &b in &cfg.b_pu {
            let band = cfg.band(b);
            let covs = cfg
                .pu
                .model(&sys, band, sys.noise_var)?
                .band_covariances(&sys)?;
            for &alpha in &cfg.alpha {
                let a_cfg = CaseAConfig {
                    band,
                    alpha,
                    calibration: cfg.case_a.calibration,
                    noise_var: sys.noise_var,
                };
                let detector = CaseADetector::calibrate(&a_cfg, &covs, cfg.seed)?;
                for e in detector.table(cfg.seed).entries {
                    if !entries.contains(&e) {
                        entries.push(e);
                    }
                }
            }
        }
    }
    Ok(ThresholdTable { entries })
}

/// Everything `detect` reports for one block.
#[derive(Debug, Clone, Serialize)]
pub struct DetectReport {
    pub seed: u64,
    /// True PU band and PU-to-noise ratio when the block was synthesized.
    pub true_band: Option<(usize, usize)>,
    pub snr_db: Option<f64>,
    pub alpha: f64,
    pub order: usize,
    pub noise_var: f64,
    pub two_step: TwoStepResult,
    /// Matched-subspace decision on the true band.
    pub known_band: Option<CaseBDecision>,
    pub trace: BandSearchTrace,
}

/// Band-search trace of trial 0 at the first grid point.
pub fn first_trace(cfg: &CampaignConfig) -> Result<BandSearchTrace> {
    cfg.validate()?;
    let synth = Synthesizer::new(cfg, cfg.lengths()[0], cfg.b_pu[0], Some(cfg.snr_db[0]))?;
    let z = synth
        .receive_all(&mut stream(cfg.seed, trial_stream_id(0, 0)))?
        .full_spectrum()?;
    trace_band_search(&z, cfg.order[0])
}

/// Synthesizes one block at the first grid point (noise only when `h0`)
/// and runs every detector on it.
pub fn detect_synthesized(cfg: &CampaignConfig, h0: bool) -> Result<DetectReport> {
    cfg.validate()?;
    let (n, b, order, alpha) = (cfg.lengths()[0], cfg.b_pu[0], cfg.order[0], cfg.alpha[0]);
    let snr = (!h0).then(|| cfg.snr_db[0]);
    let synth = Synthesizer::new(cfg, n, b, snr)?;
    let rx = synth.receive_all(&mut stream(cfg.seed, trial_stream_id(0, 0)))?;
    let z = rx.full_spectrum()?;
    let band = synth.band();
    let known_band = if b >= order + 2 {
        let seg = nalgebra::DVector::from_column_slice(&z[band.0..=band.1]);
        Some(detect(&seg, &SubspaceModel::monomial(b, order)?, alpha)?)
    } else {
        None
    };
    Ok(DetectReport {
        seed: cfg.seed,
        true_band: Some(band),
        snr_db: snr,
        alpha,
        order,
        noise_var: rx.noise_var,
        two_step: two_step_detect_spectrum(&z, alpha, order)?,
        known_band,
        trace: trace_band_search(&z, order)?,
    })
}

/// Runs the two-step detector on a recorded observation.
pub fn detect_observation(
    obs: &ObservationBlock,
    alpha: f64,
    order: usize,
    seed: u64,
) -> Result<DetectReport> {
    let noise_var = obs.config.noise_var;
    let z = crate::case_b::build_observation(obs, (0, obs.y.nrows() - 1), None, noise_var)?;
    let z = z.z.as_slice();
    Ok(DetectReport {
        seed,
        true_band: None,
        snr_db: None,
        alpha,
        order,
        noise_var,
        two_step: two_step_detect_spectrum(z, alpha, order)?,
        known_band: None,
        trace: trace_band_search(z, order)?,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleRecord {
    q: usize,
    n: usize,
    re: f64,
    im: f64,
}

/// Writes `Y_q(n)` as CSV rows `q,n,re,im`.
pub fn write_observation<W: Write>(y: &DMatrix<Complex64>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for q in 0..y.nrows() {
        for n in 0..y.ncols() {
            let v = y[(q, n)];
            w.serialize(SampleRecord {
                q,
                n,
                re: v.re,
                im: v.im,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a `q,n,re,im` CSV; every `(q, n)` of the rectangle must appear
/// exactly once.
pub fn read_observation<R: Read>(reader: R) -> Result<DMatrix<Complex64>> {
    let mut records = Vec::new();
    for rec in csv::Reader::from_reader(reader).deserialize() {
        let rec: SampleRecord = rec?;
        records.push(rec);
    }
    let rows = records.iter().map(|r| r.q + 1).max().unwrap_or(0);
    let cols = records.iter().map(|r| r.n + 1).max().unwrap_or(0);
    if records.len() != rows * cols || rows == 0 {
        return Err(SenseError::config(format!(
            "observation has {} samples, expected a full {rows}x{cols} grid",
            records.len()
        )));
    }
    let mut y = DMatrix::from_element(rows, cols, Complex64::new(f64::NAN, 0.0));
    for r in records {
        if !y[(r.q, r.n)].re.is_nan() {
            return Err(SenseError::config(format!(
                "sample ({}, {}) appears twice",
                r.q, r.n
            )));
        }
        y[(r.q, r.n)] = Complex64::new(r.re, r.im);
    }
    Ok(y)
}

/// Observation block read from `path`, sized by the file.
pub fn load_observation(path: impl AsRef<Path>, noise_var: f64) -> Result<ObservationBlock> {
    let y = read_observation(std::fs::File::open(path)?)?;
    let config = OfdmConfig {
        num_carriers: y.nrows(),
        num_symbols: y.ncols(),
        noise_var,
        ..OfdmConfig::default()
    };
    config.validate()?;
    Ok(ObservationBlock { y, config })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(scenario: Scenario) -> CampaignConfig {
        CampaignConfig {
            trials: 20,
            seed: 3,
            b_pu: vec![5],
            ..CampaignConfig::new(scenario)
        }
    }

    #[test]
    fn csv_round_trip() {
        let rows = run_campaign(&small(Scenario::CaseCEndToEnd)).unwrap();
        let mut buf = Vec::new();
        write_results(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), RESULT_HEADER);
        assert!(text
            .lines()
            .nth(1)
            .unwrap()
            .starts_with("case_c_end_to_end,,0.1,5,0,70,"));
        assert_eq!(read_results(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn observation_round_trip() {
        let y = DMatrix::from_fn(3, 4, |q, n| Complex64::new(q as f64 + 0.25, -(n as f64)));
        let mut buf = Vec::new();
        write_observation(&y, &mut buf).unwrap();
        assert_eq!(read_observation(buf.as_slice()).unwrap(), y);
        let truncated = String::from_utf8(buf)
            .unwrap()
            .lines()
            .take(6)
            .collect::<Vec<_>>()
            .join("\n");
        assert!(read_observation(truncated.as_bytes()).is_err());
    }

    #[test]
    fn every_scenario_runs() {
        for s in [
            Scenario::CaseARoc,
            Scenario::CaseBRoc,
            Scenario::CaseBPdVsSnr,
            Scenario::CaseCHitRate,
            Scenario::CaseCEndToEnd,
        ] {
            let cfg = CampaignConfig {
                b_pu: vec![1],
                order: vec![0],
                ..small(s)
            };
            let cfg = if s == Scenario::CaseARoc {
                cfg
            } else {
                CampaignConfig {
                    b_pu: vec![5],
                    ..cfg
                }
            };
            let rows = run_campaign(&cfg).unwrap();
            assert!(!rows.is_empty(), "{s:?}");
            for r in &rows {
                assert!((0.0..=1.0).contains(&r.estimate));
                assert!(r.scenario.starts_with(s.name()));
            }
        }
    }

    #[test]
    fn detect_is_deterministic() {
        let cfg = small(Scenario::CaseCEndToEnd);
        let a = serde_json::to_string(&detect_synthesized(&cfg, false).unwrap()).unwrap();
        let b = serde_json::to_string(&detect_synthesized(&cfg, false).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}
