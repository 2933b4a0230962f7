use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use ofdm_sense::harness::{
    calibration_table, detect_observation, detect_synthesized, first_trace, load_observation,
    run_campaign, write_results, CampaignConfig, Scenario,
};
use ofdm_sense::{Result, SenseError};

/// Monte-Carlo campaigns and one-shot decisions for OFDM primary-user sensing.
#[derive(Debug, Parser)]
#[command(name = "ofdm-sense", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML campaign configuration; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Trials per point, overriding the configuration.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write Case A per-carrier threshold tables.
    Calibrate,
    /// Run a case_a_roc, case_b_roc or case_b_pd_vs_snr campaign.
    Roc,
    /// Run a case_c_hit_rate or case_c_end_to_end campaign.
    BandSearch {
        /// Also write the band-search trace of the first trial as JSON.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run the two-step detector on one block and print a JSON report.
    Detect {
        /// Observation CSV with columns q,n,re,im; synthesized when absent.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Noise variance of the recorded observation.
        #[arg(long, default_value_t = 1.0)]
        noise_var: f64,
        /// Synthesize a noise-only block.
        #[arg(long)]
        h0: bool,
    },
}

fn load_config(common: &Common, default: Scenario, allowed: &[Scenario]) -> Result<CampaignConfig> {
    let mut cfg = match &common.config {
        Some(path) => CampaignConfig::load(path)?,
        None => CampaignConfig::new(default),
    };
    if !allowed.contains(&cfg.scenario) {
        let names: Vec<&str> = allowed.iter().map(|s| s.name()).collect();
        return Err(SenseError::Config(format!(
            "scenario {} is not one of {}",
            cfg.scenario.name(),
            names.join(", ")
        )));
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = common.trials {
        cfg.trials = trials;
        if let ofdm_sense::case_a::Calibration::EmpiricalHistogram { trials: t } =
            &mut cfg.case_a.calibration
        {
            *t = trials;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(out: Option<&Path>, write: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match out {
        Some(path) => {
            let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
            write(&mut file)?;
            file.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn json_line(w: &mut dyn Write, value: &impl serde::Serialize) -> Result<()> {
    serde_json::to_writer_pretty(&mut *w, value)?;
    writeln!(w)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let common = &cli.common;
    let out = common.out.as_deref();
    match cli.command {
        Command::Calibrate => {
            let cfg = load_config(common, Scenario::CaseARoc, &[Scenario::CaseARoc])?;
            let table = calibration_table(&cfg)?;
            emit(out, |w| table.write_csv(w))
        }
        Command::Roc => {
            let cfg = load_config(
                common,
                Scenario::CaseARoc,
                &[
                    Scenario::CaseARoc,
                    Scenario::CaseBRoc,
                    Scenario::CaseBPdVsSnr,
                ],
            )?;
            let rows = run_campaign(&cfg)?;
            emit(out, |w| write_results(&rows, w))
        }
        Command::BandSearch { trace } => {
            let cfg = load_config(
                common,
                Scenario::CaseCHitRate,
                &[Scenario::CaseCHitRate, Scenario::CaseCEndToEnd],
            )?;
            if let Some(path) = trace {
                let t = first_trace(&cfg)?;
                emit(Some(&path), |w| json_line(w, &t))?;
            }
            let rows = run_campaign(&cfg)?;
            emit(out, |w| write_results(&rows, w))
        }
        Command::Detect {
            input,
            noise_var,
            h0,
        } => {
            let cfg = load_config(
                common,
                Scenario::CaseCEndToEnd,
                &[Scenario::CaseCHitRate, Scenario::CaseCEndToEnd],
            )?;
            let report = match input {
                Some(path) => {
                    let obs = load_observation(path, noise_var)?;
                    detect_observation(&obs, cfg.alpha[0], cfg.order[0], cfg.seed)?
                }
                None => detect_synthesized(&cfg, h0)?,
            };
            emit(out, |w| json_line(w, &report))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}
