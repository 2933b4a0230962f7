use std::path::PathBuf;

use ofdm_sense::harness::{
    band_gains, read_results, run_campaign, write_results, CampaignConfig, ChannelSpec, CuSpec,
    PuSpec, Scenario, RESULT_HEADER,
};
use ofdm_sense::numerics::rng::stream;
use ofdm_sense::ofdm::{OfdmConfig, PowerProfile};

const ALL: [Scenario; 5] = [
    Scenario::CaseARoc,
    Scenario::CaseBRoc,
    Scenario::CaseBPdVsSnr,
    Scenario::CaseCHitRate,
    Scenario::CaseCEndToEnd,
];

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn csv_bytes(cfg: &CampaignConfig) -> Vec<u8> {
    let rows = run_campaign(cfg).unwrap();
    let mut buf = Vec::new();
    write_results(&rows, &mut buf).unwrap();
    buf
}

fn quick(scenario: Scenario) -> CampaignConfig {
    let mut cfg = CampaignConfig::new(scenario);
    cfg.trials = 40;
    cfg.snr_db.truncate(2);
    if scenario != Scenario::CaseARoc {
        cfg.b_pu = vec![5];
    }
    cfg
}

#[test]
fn toml_round_trip() {
    let mut variants: Vec<CampaignConfig> = ALL.iter().map(|&s| CampaignConfig::new(s)).collect();
    let mut custom = CampaignConfig::new(Scenario::CaseBPdVsSnr);
    custom.pu = PuSpec::Ar {
        coefficients: vec![-1.2, 0.5],
        burn_in: Some(300),
    };
    custom.channel = ChannelSpec::Multipath {
        paths: 4,
        profile: PowerProfile::Exponential { decay: 0.7 },
        notch_depth: Some(0.2),
        max_redraws: 50,
    };
    custom.cu = Some(CuSpec {
        snr_db: 8.0,
        estimate_error: 0.05,
    });
    custom.split_halves = true;
    variants.push(custom);
    for cfg in variants {
        let text = cfg.to_toml_string().unwrap();
        let back = CampaignConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, cfg, "{text}");
    }
}

#[test]
fn omitted_keys_take_scenario_defaults() {
    let cfg =
        CampaignConfig::from_toml_str("scenario = \"case_c_hit_rate\"\ntrials = 7\n").unwrap();
    let mut expect = CampaignConfig::new(Scenario::CaseCHitRate);
    expect.trials = 7;
    assert_eq!(cfg, expect);

    let flat =
        CampaignConfig::from_toml_str("scenario = \"case_b_roc\"\n[channel]\nkind = \"flat\"\n")
            .unwrap();
    assert_eq!(flat.channel, ChannelSpec::Flat);
    let partial =
        CampaignConfig::from_toml_str("scenario = \"case_b_roc\"\n[channel]\npaths = 3\n").unwrap();
    assert!(matches!(
        partial.channel,
        ChannelSpec::Multipath { paths: 3, .. }
    ));
    let system =
        CampaignConfig::from_toml_str("scenario = \"case_a_roc\"\n[system]\nnum_symbols = 12\n")
            .unwrap();
    assert_eq!(system.system.num_symbols, 12);
    assert_eq!(system.system.num_carriers, 128);
}

#[test]
fn bad_configs_are_config_errors() {
    let cases = [
        "",
        "scenario = \"case_z\"",
        "scenario = \"case_a_roc\"\ntrials = 0",
        "scenario = \"case_a_roc\"\nunknown_key = 1",
        "scenario = \"case_a_roc\"\nalpha = [1.5]",
        "scenario = \"case_c_hit_rate\"\nb_pu = [60]",
        "scenario = \"case_c_hit_rate\"\n[pu]\nkind = \"ar\"\ncoefficients = [-2.5, 1.2]",
        "scenario = \"case_c_hit_rate\"\n[channel]\nkind = \"multipath\"\nnotch_depth = 0.0",
        "scenario = \"case_a_roc\"\nb_pu = [2]\n[case_a]\ncarrier_offset = 2",
        "scenario = [",
    ];
    for text in cases {
        let err = CampaignConfig::from_toml_str(text).unwrap_err();
        assert!(err.is_config(), "{text:?}: {err}");
    }
    assert!(CampaignConfig::load("/definitely/not/here.toml")
        .unwrap_err()
        .is_config());
}

#[test]
fn shipped_configs_parse() {
    let mut count = 0;
    for entry in std::fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            CampaignConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            count += 1;
        }
    }
    assert!(count >= 5);
}

#[test]
fn single_trial_smoke_emits_valid_csv() {
    for s in ALL {
        let mut cfg = quick(s);
        cfg.trials = 1;
        let buf = csv_bytes(&cfg);
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next(), Some(RESULT_HEADER));
        let rows = read_results(buf.as_slice()).unwrap();
        assert!(!rows.is_empty());
        for r in rows {
            assert!(r.estimate == 0.0 || r.estimate == 1.0);
            assert_eq!(r.stderr, 0.0);
            assert_eq!(r.trials, 1);
        }
    }
}

#[test]
fn byte_identical_across_runs_and_thread_counts() {
    for s in ALL {
        let cfg = quick(s);
        let once = csv_bytes(&cfg);
        let again = csv_bytes(&cfg);
        assert_eq!(once, again, "{s:?}");
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap();
        let threaded = pool.install(|| csv_bytes(&cfg));
        assert_eq!(once, threaded, "{s:?} with 3 threads");
        let other_seed = CampaignConfig {
            seed: cfg.seed + 1,
            ..cfg.clone()
        };
        assert_ne!(once, csv_bytes(&other_seed));
    }
}

#[test]
fn standard_errors_are_honest() {
    let mut cfg = CampaignConfig::new(Scenario::CaseBRoc);
    cfg.channel = ChannelSpec::Flat;
    cfg.trials = 400;
    cfg.b_pu = vec![10];
    cfg.snr_db = vec![-8.0, -6.0];
    let a = run_campaign(&CampaignConfig {
        seed: 11,
        ..cfg.clone()
    })
    .unwrap();
    let b = run_campaign(&CampaignConfig { seed: 12, ..cfg }).unwrap();
    let (mut within, mut total) = (0, 0);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(
            (&x.scenario, x.snr_db, x.alpha, x.r),
            (&y.scenario, y.snr_db, y.alpha, y.r)
        );
        let se = (x.stderr.powi(2) + y.stderr.powi(2)).sqrt();
        if se == 0.0 {
            continue;
        }
        total += 1;
        if ((x.estimate - y.estimate) / se).abs() <= 3.0 {
            within += 1;
        }
    }
    assert!(total >= 30, "only {total} comparable points");
    assert!(
        within as f64 >= 0.95 * total as f64,
        "{within}/{total} within 3 SE"
    );
}

#[test]
fn notched_gains_have_a_notch_and_unit_mean() {
    let sys = OfdmConfig::default();
    let spec = ChannelSpec::Multipath {
        paths: 8,
        profile: PowerProfile::Exponential { decay: 0.3 },
        notch_depth: Some(0.1),
        max_redraws: 10_000,
    };
    for seed in 0..50 {
        let g = band_gains(&sys, (81, 90), &spec, &mut stream(seed, 0)).unwrap();
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        assert!((mean - 1.0).abs() < 1e-12);
        assert!(g.iter().cloned().fold(f64::INFINITY, f64::min) < 0.1);
    }
    let impossible = ChannelSpec::Multipath {
        paths: 1,
        profile: PowerProfile::Uniform,
        notch_depth: Some(0.5),
        max_redraws: 20,
    };
    assert!(band_gains(&sys, (81, 90), &impossible, &mut stream(0, 0)).is_err());
    assert_eq!(
        band_gains(&sys, (3, 5), &ChannelSpec::Flat, &mut stream(0, 0)).unwrap(),
        vec![1.0; 3]
    );
}

#[test]
fn hit_rate_rises_with_snr() {
    let mut cfg = CampaignConfig::new(Scenario::CaseCHitRate);
    cfg.trials = 300;
    cfg.b_pu = vec![10];
    cfg.snr_db = vec![-6.0, 2.0];
    let rows = run_campaign(&cfg).unwrap();
    let hit: Vec<f64> = rows
        .iter()
        .filter(|r| r.scenario == "case_c_hit_rate")
        .map(|r| r.estimate)
        .collect();
    assert_eq!(hit.len(), 2);
    assert!(hit[0] < hit[1], "{hit:?}");
    assert!(hit[1] > 0.95);
}
