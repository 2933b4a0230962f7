use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use ofdm_sense::case_a::{lmp_statistic, Calibration, CaseAConfig, CaseADetector};
use ofdm_sense::case_b::{matched_subspace_statistic, SubspaceModel};
use ofdm_sense::case_c::{band_search, exhaustive_band_search, ls_segment_error, DpTable};
use ofdm_sense::numerics::rng::stream;
use ofdm_sense::numerics::{complex_normal, f_cdf, f_quantile, hermitian_eig, noncentral_f_sf};
use ofdm_sense::ofdm::{generate_observation, ChannelRealization, ObservationBlock, OfdmConfig};
use ofdm_sense::pu_models::{
    ar_covariance, tonal_covariance, ArPuConfig, NormalizedCovariance, TonalPuConfig,
};
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

fn system(n: usize) -> OfdmConfig {
    OfdmConfig {
        num_symbols: n,
        ..OfdmConfig::default()
    }
}

fn check_normalized(c: &NormalizedCovariance, eta: Option<usize>) -> Result<(), TestCaseError> {
    let m = c.matrix();
    let n = m.nrows();
    for i in 0..n {
        prop_assert!((m[(i, i)] - 1.0).norm() < 1e-10, "diagonal {}", m[(i, i)]);
        for j in 0..n {
            prop_assert!((m[(i, j)] - m[(j, i)].conj()).norm() < 1e-12);
            if let Some(eta) = eta {
                if i.abs_diff(j) >= eta {
                    prop_assert_eq!(m[(i, j)], Complex64::new(0.0, 0.0));
                }
            }
        }
    }
    let eig = hermitian_eig(m).unwrap();
    prop_assert!(
        eig.values.min() > -1e-9 * n as f64,
        "min eigenvalue {}",
        eig.values.min()
    );
    let err = (eig.reconstruct() - m).norm();
    prop_assert!(err < 1e-8, "reconstruction error {err}");
    Ok(())
}

fn gaussian_vec(rng: &mut impl rand::Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Synthetic spectrum: noise plus a flat step on `[a, a + w)`.
fn stepped(seed: u64, q: usize, a: usize, w: usize, height: f64) -> Vec<f64> {
    let mut z = gaussian_vec(&mut stream(seed, 0), q);
    for v in &mut z[a..a + w] {
        *v += height;
    }
    z
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn tonal_covariance_is_a_banded_correlation(
        tones in 1usize..200,
        offset in 0.0f64..3.0,
        ratio in 1.5f64..20.0,
        n in 2usize..40,
        q in 78usize..86,
    ) {
        let sys = system(n);
        let mut cfg = TonalPuConfig::covering_band(&sys, (80, 83), ratio * sys.symbol_duration, 1.0);
        cfg.num_tones = tones;
        cfg.carrier_freq = sys.carrier_freq + (80.0 + offset) / sys.symbol_duration;
        cfg.band = (78, 85);
        cfg.power_per_carrier = vec![1.0; 8];
        let eta = cfg.eta(&sys);
        match tonal_covariance(&cfg, &sys, q) {
            Ok(c) => check_normalized(&c, Some(eta))?,
            Err(e) => prop_assert!(matches!(e, ofdm_sense::SenseError::Degenerate(_)), "{e}"),
        }
    }

    #[test]
    fn ar_covariance_is_a_correlation(
        r1 in -0.9f64..0.9,
        r2 in -0.9f64..0.9,
        second in any::<bool>(),
        n in 2usize..24,
    ) {
        let sys = OfdmConfig { num_carriers: 16, ..system(n) };
        // poles r1, r2 of 1 + φ1 z⁻¹ + φ2 z⁻²
        let coeffs = if second { vec![-(r1 + r2), r1 * r2] } else { vec![-r1] };
        let cfg = ArPuConfig::new(coeffs, (2, 5), 1.0);
        for q in 2..=5 {
            check_normalized(&ar_covariance(&cfg, &sys, q).unwrap(), None)?;
        }
    }

    #[test]
    fn lmp_is_quadratic_in_scale(seed in any::<u64>(), sigma in 0.01f64..100.0) {
        let sys = system(24);
        let cfg = TonalPuConfig::covering_band(&sys, (81, 81), 26.6e-6, 1.0);
        let c = tonal_covariance(&cfg, &sys, 81).unwrap();
        let mut rng = stream(seed, 1);
        let y = DVector::from_fn(24, |_, _| complex_normal(&mut rng, 1.0));
        let t = lmp_statistic(&y, &c).unwrap();
        let ts = lmp_statistic(&(&y * Complex64::new(sigma, 0.0)), &c).unwrap();
        prop_assert!((ts - sigma * sigma * t).abs() <= 1e-12 * ts.abs());
    }

    #[test]
    fn subspace_statistic_invariances(
        seed in any::<u64>(),
        width in 6usize..24,
        order in 0usize..3,
        scale in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0],
    ) {
        let model = SubspaceModel::monomial(width, order).unwrap();
        let mut rng = stream(seed, 2);
        let z = DVector::from_vec(gaussian_vec(&mut rng, width));
        let mix = loop {
            let m = DMatrix::<f64>::from_fn(order + 1, order + 1, |_, _| StandardNormal.sample(&mut rng));
            if m.determinant().abs() > 0.1 {
                break m;
            }
        };
        let mixed = SubspaceModel::custom(model.basis() * mix).unwrap();
        let t = matched_subspace_statistic(&z, &model).unwrap().value;
        let tm = matched_subspace_statistic(&z, &mixed).unwrap().value;
        let ts = matched_subspace_statistic(&(&z * scale), &model).unwrap().value;
        prop_assert!((t - tm).abs() < 1e-9 * t.max(1.0), "{t} vs {tm}");
        prop_assert!((t - ts).abs() <= 1e-12 * t.max(1.0), "{t} vs {ts}");
    }

    #[test]
    fn dp_equals_exhaustive(seed in any::<u64>(), q in 4usize..=32, order in 0usize..=2, step in any::<bool>()) {
        prop_assume!(q >= order + 2);
        let z = if step {
            let w = (q / 3).max(order + 1);
            stepped(seed, q, q / 4, w, 2.5)
        } else {
            gaussian_vec(&mut stream(seed, 3), q)
        };
        let dp = band_search(&z, order).unwrap();
        let ex = exhaustive_band_search(&z, order).unwrap();
        prop_assert_eq!((dp.q0, dp.q1), (ex.q0, ex.q1));
    }

    #[test]
    fn objective_decomposes(seed in any::<u64>(), q in 4usize..=48, order in 0usize..=2) {
        prop_assume!(q >= order + 2);
        let z = gaussian_vec(&mut stream(seed, 4), q);
        let est = band_search(&z, order).unwrap();
        let delta0 = |a: usize, b_excl: usize| z[a..b_excl].iter().map(|v| v * v).sum::<f64>();
        let (d1, _) = ls_segment_error(&z, est.q0, est.q1, order).unwrap();
        let total = delta0(0, est.q0) + d1 + delta0(est.q1 + 1, q);
        prop_assert!((total - est.objective).abs() < 1e-9 * total.max(1.0), "{total} vs {}", est.objective);
    }

    #[test]
    fn band_search_is_shift_equivariant(seed in any::<u64>(), start in 3usize..20, width in 4usize..10, shift in 1usize..8) {
        let q = 40;
        prop_assume!(start + width + shift + 3 <= q);
        let z = stepped(seed, q, start, width, 8.0);
        let mut shifted = vec![0.0; q];
        for (i, v) in z.iter().enumerate() {
            shifted[(i + shift) % q] = *v;
        }
        let a = band_search(&z, 0).unwrap();
        let b = band_search(&shifted, 0).unwrap();
        prop_assume!(a.q0 > 0 && a.q1 + shift < q - 1);
        prop_assert_eq!((a.q0 + shift, a.q1 + shift), (b.q0, b.q1));
    }

    #[test]
    fn distribution_functions_are_monotone(
        d1 in 1u32..30,
        d2 in 1u32..60,
        lambda in 0.0f64..30.0,
        x in 0.01f64..20.0,
        dx in 0.001f64..5.0,
    ) {
        let (d1, d2) = (f64::from(d1), f64::from(d2));
        prop_assert!(f_cdf(x, d1, d2).unwrap() <= f_cdf(x + dx, d1, d2).unwrap());
        prop_assert!(noncentral_f_sf(x, d1, d2, lambda).unwrap() >= noncentral_f_sf(x + dx, d1, d2, lambda).unwrap());
        let p = f_cdf(x, d1, d2).unwrap();
        prop_assume!(p > 1e-6 && p < 1.0 - 1e-6);
        let back = f_cdf(f_quantile(p, d1, d2).unwrap(), d1, d2).unwrap();
        prop_assert!((back - p).abs() < 1e-8, "{p} -> {back}");
    }

    #[test]
    fn observation_is_seed_deterministic(seed in any::<u64>(), n in 1usize..6) {
        let sys = OfdmConfig { cu_active: true, ..system(n) };
        let ch = ChannelRealization::flat(&sys);
        let a = generate_observation(&sys, &ch, None, &mut stream(seed, 9)).unwrap();
        let b = generate_observation(&sys, &ch, None, &mut stream(seed, 9)).unwrap();
        prop_assert_eq!(a.y, b.y);
    }
}

#[test]
fn dp_table_reports_outside_energy() {
    let z = stepped(5, 24, 6, 7, 3.0);
    let (est, table): (_, DpTable) = ofdm_sense::case_c::band_search_with_table(&z, 1).unwrap();
    let direct: f64 = z[..est.q0].iter().map(|v| v * v).sum();
    assert!((table.delta0(0, est.q0) - direct).abs() < 1e-12);
}

/// Scaling the noise variance scales every threshold, so decisions on the
/// correspondingly scaled observation do not change.
#[test]
fn case_a_decisions_scale_with_noise() {
    let n = 16;
    let sys = system(n);
    let band = (81, 82);
    let cfg = TonalPuConfig::covering_band(&sys, band, 26.6e-6, 1.0);
    let covs: Vec<_> = (81..=82)
        .map(|q| tonal_covariance(&cfg, &sys, q).unwrap())
        .collect();
    let base = CaseAConfig {
        band,
        alpha: 0.1,
        calibration: Calibration::EmpiricalHistogram { trials: 4000 },
        noise_var: 1.0,
    };
    let unit = CaseADetector::calibrate(&base, &covs, 17).unwrap();
    for s in [0.01, 0.5, 3.0, 250.0] {
        let scaled = CaseADetector::calibrate(
            &CaseAConfig {
                noise_var: s,
                ..base.clone()
            },
            &covs,
            17,
        )
        .unwrap();
        for trial in 0..200 {
            let mut rng = stream(trial, 11);
            let y = DMatrix::from_fn(128, n, |_, _| complex_normal(&mut rng, 1.0));
            let obs = ObservationBlock {
                y: y.clone(),
                config: sys.clone(),
            };
            let obs_s = ObservationBlock {
                y: y * Complex64::new(s.sqrt(), 0.0),
                config: OfdmConfig {
                    noise_var: s,
                    ..sys.clone()
                },
            };
            let a = unit.detect(&obs).unwrap();
            let b = scaled.detect(&obs_s).unwrap();
            assert_eq!(a.decisions, b.decisions, "noise scale {s}, trial {trial}");
        }
    }
}
