//! Monte-Carlo campaigns for each scenario.

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::case_a::Statistic;
use crate::case_b::{matched_subspace_statistic, threshold_from_alpha, SubspaceModel};
use crate::case_c::{band_search, two_step_detect_split};
use crate::numerics::rng::{stream, trial_stream_id, SimRng};
use crate::numerics::{binomial_stderr, complex_normal, exceedance, upper_quantile};
use crate::ofdm::OfdmConfig;
use crate::Result;

use super::config::{db_to_ratio, CampaignConfig, Scenario};
use super::synth::{single_carrier, Synthesizer};
use super::ResultRow;

/// Hands out a fresh stream-address block for every simulated point.
struct PointIds(u32);

impl PointIds {
    fn next(&mut self) -> u32 {
        let id = self.0;
        self.0 += 1;
        id
    }
}

/// Runs `f` on `trials` independent streams of point `point`, in trial order.
fn run_trials<T, F>(seed: u64, point: u32, trials: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut SimRng) -> Result<T> + Sync,
{
    (0..trials)
        .into_par_iter()
        .map(|t| f(&mut stream(seed, trial_stream_id(point, t as u32))))
        .collect()
}

fn fraction(flags: &[bool]) -> f64 {
    flags.iter().filter(|&&f| f).count() as f64 / flags.len().max(1) as f64
}

struct RowBuilder<'a> {
    cfg: &'a CampaignConfig,
}

impl RowBuilder<'_> {
    #[allow(clippy::too_many_arguments)]
    fn row(
        &self,
        scenario: String,
        snr_db: Option<f64>,
        alpha: Option<f64>,
        b_pu: Option<usize>,
        r: Option<usize>,
        n: usize,
        estimate: f64,
    ) -> ResultRow {
        ResultRow {
            scenario,
            snr_db,
            alpha,
            b_pu,
            r,
            n,
            estimate,
            stderr: binomial_stderr(estimate, self.cfg.trials),
            trials: self.cfg.trials,
            seed: self.cfg.seed,
        }
    }
}

/// Runs every point of the campaign. Results depend only on the
/// configuration, not on the number of worker threads.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    match cfg.scenario {
        Scenario::CaseARoc => case_a_roc(cfg),
        Scenario::CaseBRoc => case_b(cfg, true),
        Scenario::CaseBPdVsSnr => case_b(cfg, false),
        Scenario::CaseCHitRate => case_c_hit_rate(cfg),
        Scenario::CaseCEndToEnd => case_c_end_to_end(cfg),
    }
}

fn noise_vector(rng: &mut SimRng, n: usize, noise_var: f64) -> DVector<Complex64> {
    DVector::from_fn(n, |_, _| complex_normal(rng, noise_var))
}

fn case_a_roc(cfg: &CampaignConfig) -> Result<Vec<ResultRow>> {
    let out = RowBuilder { cfg };
    let mut ids = PointIds(0);
    let mut rows = Vec::new();
    for n in cfg.lengths() {
        let sys = OfdmConfig {
            num_symbols: n,
            ..cfg.system.clone()
        };
        for &b in &cfg.b_pu {
            let band = cfg.band(b);
            let q = band.0 + cfg.case_a.carrier_offset;
            for &snr in &cfg.snr_db {
                let power = db_to_ratio(snr) * sys.noise_var;
                let model = cfg.pu.model(&sys, band, power)?;
                let c = model.covariance(&sys, q)?;
                let gen = single_carrier(&model, q, power).generator(&sys)?;
                let evaluate = |y: &DVector<Complex64>| -> Result<[f64; 3]> {
                    let mut s = [0.0; 3];
                    for (slot, stat) in s.iter_mut().zip(Statistic::ALL) {
                        *slot = stat.evaluate(y, &c, power, sys.noise_var)?;
                    }
                    Ok(s)
                };
                let h0 = run_trials(cfg.seed, ids.next(), cfg.trials, |rng| {
                    evaluate(&noise_vector(rng, n, sys.noise_var))
                })?;
                let h1 = run_trials(cfg.seed, ids.next(), cfg.trials, |rng| {
                    let pu = gen.generate(rng);
                    let y = pu.values.row(0).transpose() + noise_vector(rng, n, sys.noise_var);
                    evaluate(&y)
                })?;
                for (d, stat) in Statistic::ALL.iter().enumerate() {
                    let mut null: Vec<f64> = h0.iter().map(|s| s[d]).collect();
                    let alt: Vec<f64> = h1.iter().map(|s| s[d]).collect();
                    for &alpha in &cfg.alpha {
                        let thr = upper_quantile(&mut null, alpha)?;
                        rows.push(out.row(
                            format!("{}.{}", cfg.scenario.name(), stat.name()),
                            Some(snr),
                            Some(alpha),
                            Some(b),
                            None,
                            n,
                            exceedance(&alt, thr),
                        ));
                    }
                }
            }
        }
    }
    Ok(rows)
}

fn case_b(cfg: &CampaignConfig, with_null: bool) -> Result<Vec<ResultRow>> {
    let out = RowBuilder { cfg };
    let mut ids = PointIds(0);
    let mut rows = Vec::new();
    for n in cfg.lengths() {
        for &b in &cfg.b_pu {
            let models: Vec<SubspaceModel> = cfg
                .order
                .iter()
                .map(|&r| SubspaceModel::monomial(b, r))
                .collect::<Result<_>>()?;
            // One statistic per order for every trial.
            let simulate = |snr: Option<f64>, point: u32| -> Result<Vec<Vec<f64>>> {
                let synth = Synthesizer::new(cfg, n, b, snr)?;
                run_trials(cfg.seed, point, cfg.trials, |rng| {
                    let rx = synth.receive(synth.band(), rng)?;
                    let z = DVector::from_vec(rx.full_spectrum()?);
                    models
                        .iter()
                        .map(|m| Ok(matched_subspace_statistic(&z, m)?.value))
                        .collect()
                })
            };
            let mut emit = |stats: &[Vec<f64>], snr: Option<f64>, name: String| -> Result<()> {
                for (i, &r) in cfg.order.iter().enumerate() {
                    let per_order: Vec<f64> = stats.iter().map(|s| s[i]).collect();
                    for &alpha in &cfg.alpha {
                        let thr = threshold_from_alpha(alpha, r, b)?;
                        let est = exceedance(&per_order, thr);
                        rows.push(out.row(
                            name.clone(),
                            snr,
                            Some(alpha),
                            Some(b),
                            Some(r),
                            n,
                            est,
                        ));
                    }
                }
                Ok(())
            };
            if with_null {
                let stats = simulate(None, ids.next())?;
                emit(&stats, None, format!("{}.pfa", cfg.scenario.name()))?;
            }
            for &snr in &cfg.snr_db {
                let stats = simulate(Some(snr), ids.next())?;
                emit(&stats, Some(snr), cfg.scenario.name().to_string())?;
            }
        }
    }
    Ok(rows)
}

fn case_c_hit_rate(cfg: &CampaignConfig) -> Result<Vec<ResultRow>> {
    let out = RowBuilder { cfg };
    let mut ids = PointIds(0);
    let mut rows = Vec::new();
    let name = cfg.scenario.name();
    for n in cfg.lengths() {
        for &b in &cfg.b_pu {
            for &snr in &cfg.snr_db {
                let synth = Synthesizer::new(cfg, n, b, Some(snr))?;
                let truth = synth.band();
                // (hit within tolerance, exact hit) per order
                let outcomes = run_trials(cfg.seed, ids.next(), cfg.trials, |rng| {
                    let z = synth.receive_all(rng)?.full_spectrum()?;
                    cfg.order
                        .iter()
                        .map(|&r| {
                            let est = band_search(&z, r)?;
                            Ok((est.hits(truth, cfg.hit_tolerance), est.hits(truth, 0)))
                        })
                        .collect::<Result<Vec<_>>>()
                })?;
                for (i, &r) in cfg.order.iter().enumerate() {
                    let hit: Vec<bool> = outcomes.iter().map(|o| o[i].0).collect();
                    let exact: Vec<bool> = outcomes.iter().map(|o| o[i].1).collect();
                    rows.push(out.row(
                        name.to_string(),
                        Some(snr),
                        None,
                        Some(b),
                        Some(r),
                        n,
                        fraction(&hit),
                    ));
                    rows.push(out.row(
                        format!("{name}.exact"),
                        Some(snr),
                        None,
                        Some(b),
                        Some(r),
                        n,
                        fraction(&exact),
                    ));
                }
            }
        }
    }
    Ok(rows)
}

fn case_c_end_to_end(cfg: &CampaignConfig) -> Result<Vec<ResultRow>> {
    let out = RowBuilder { cfg };
    let mut ids = PointIds(0);
    let mut rows = Vec::new();
    let name = if cfg.split_halves {
        format!("{}.split", cfg.scenario.name())
    } else {
        cfg.scenario.name().to_string()
    };
    for n in cfg.lengths() {
        for &b in &cfg.b_pu {
            // Decisions indexed by order, then alpha.
            let simulate = |snr: Option<f64>, point: u32| -> Result<Vec<Vec<Vec<bool>>>> {
                let synth = Synthesizer::new(cfg, n, b, snr)?;
                run_trials(cfg.seed, point, cfg.trials, |rng| {
                    let rx = synth.receive_all(rng)?;
                    let (search, test) = if cfg.split_halves {
                        let half = n / 2;
                        (rx.spectrum(0..half)?.z, rx.spectrum(half..n)?.z)
                    } else {
                        let z = rx.spectrum(0..n)?.z;
                        (z.clone(), z)
                    };
                    cfg.order
                        .iter()
                        .map(|&r| {
                            cfg.alpha
                                .iter()
                                .map(|&a| {
                                    Ok(two_step_detect_split(
                                        search.as_slice(),
                                        test.as_slice(),
                                        a,
                                        r,
                                    )?
                                    .detected)
                                })
                                .collect()
                        })
                        .collect()
                })
            };
            let mut emit = |decisions: &[Vec<Vec<bool>>], snr: Option<f64>| {
                for (i, &r) in cfg.order.iter().enumerate() {
                    for (j, &alpha) in cfg.alpha.iter().enumerate() {
                        let flags: Vec<bool> = decisions.iter().map(|d| d[i][j]).collect();
                        rows.push(out.row(
                            name.clone(),
                            snr,
                            Some(alpha),
                            Some(b),
                            Some(r),
                            n,
                            fraction(&flags),
                        ));
                    }
                }
            };
            let null = simulate(None, ids.next())?;
            emit(&null, None);
            for &snr in &cfg.snr_db {
                let alt = simulate(Some(snr), ids.next())?;
                emit(&alt, Some(snr));
            }
        }
    }
    Ok(rows)
}
