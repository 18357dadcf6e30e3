use approx::assert_relative_eq;
use num_complex::Complex64;
use proptest::prelude::*;
use zfhgm::channel::*;
use zfhgm::config::{LognormalLaw, Scenario, WinnerConfig};

fn spec(k_db: f64, as_deg: f64) -> ChannelSpec {
    ChannelSpec::new(6, 4, k_db, as_deg)
}

#[test]
fn broadside_receive_steering_is_flat() {
    let mut s = spec(7.0, 51.0);
    s.theta_r_deg = 0.0;
    let a = steering_vectors(&s).unwrap().a;
    for v in a.iter() {
        assert!((v - Complex64::new(1.0 / 6f64.sqrt(), 0.0)).norm() < 1e-15);
    }
    s.phase = PhaseConvention::Cosine;
    s.theta_r_deg = 90.0;
    let a = steering_vectors(&s).unwrap().a;
    for v in a.iter() {
        assert!((v - Complex64::new(1.0 / 6f64.sqrt(), 0.0)).norm() < 1e-15);
    }
}

#[test]
fn los_norms() {
    let los = steering_vectors(&spec(7.0, 51.0)).unwrap();
    assert_relative_eq!(los.a.norm(), 1.0, max_relative = 1e-14);
    let k = 10f64.powf(0.7);
    assert_relative_eq!(
        los.b.norm_squared(),
        k / (k + 1.0) * 24.0,
        max_relative = 1e-12
    );
    assert_relative_eq!(los.b.norm_squared(), 20.0076, max_relative = 1e-4);
}

#[test]
fn correlation_anchor_values() {
    let low = laplacian_correlation(51.0, 5.0, 4, 0.5).unwrap();
    let high = laplacian_correlation(11.0, 5.0, 4, 0.5).unwrap();
    assert!((low.r12_abs() - 0.12).abs() <= 0.02, "{}", low.r12_abs());
    assert!((high.r12_abs() - 0.83).abs() <= 0.02, "{}", high.r12_abs());
    low.validate().unwrap();
    high.validate().unwrap();
}

#[test]
fn coherent_limit() {
    let r = laplacian_correlation(0.01, 5.0, 4, 0.5).unwrap();
    assert!((r.r12_abs() - 1.0).abs() < 1e-3);
}

#[test]
fn z0_mapping() {
    let s = spec(-25.0, 51.0);
    let p = derive_snr_params(&s, &CorrelationMatrix::identity(4), 1.0).unwrap();
    assert_eq!(format!("{:.3e}", p.x2), "5.692e-2");
    let k = 10f64.powf(-2.5);
    assert_relative_eq!(p.x2, k * 6.0 * 3.0, max_relative = 1e-12);
}

#[test]
fn rayleigh_has_no_noncentrality() {
    let s = spec(f64::NEG_INFINITY, 51.0);
    let r = s.correlation().unwrap();
    let p = derive_snr_params(&s, &r, 10.0).unwrap();
    assert_eq!(p.x1, 0.0);
    assert_eq!(p.x2, 0.0);
    assert!(p.is_rician_rayleigh());
}

#[test]
fn rician_rayleigh_geometry() {
    let s = spec(7.0, 51.0);
    let r = s.correlation().unwrap();
    let mut los = steering_vectors(&s).unwrap();
    for i in 1..4 {
        los.b[i] = Complex64::new(0.0, 0.0);
    }
    los.b_tilde.fill(Complex64::new(0.0, 0.0));
    let d = derive_from_los(&s, &los, &r, 10.0).unwrap();
    assert_eq!(d.params.x2, 0.0);
    assert!(d.params.x1 > 0.0);
    assert!(d.params.c1.is_none());
}

#[test]
fn singular_correlation_is_reported() {
    let s = spec(7.0, 51.0);
    let r = CorrelationMatrix {
        r_t: nalgebra::DMatrix::from_element(4, 4, Complex64::new(1.0, 0.0)),
    };
    assert!(matches!(
        derive_snr_params(&s, &r, 1.0),
        Err(zfhgm::Error::DegenerateCorrelation(_))
    ));
}

#[test]
fn identity_correlation_closed_form() {
    for k_db in [-10.0, 0.0, 7.0, 14.0] {
        let s = spec(k_db, 51.0);
        let p = derive_snr_params(&s, &CorrelationMatrix::identity(4), 1.0).unwrap();
        let k = 10f64.powf(k_db / 10.0);
        assert_relative_eq!(p.x2, k * 6.0 * 3.0, max_relative = 1e-12);
    }
}

#[test]
fn c1_independent_of_k() {
    let r = laplacian_correlation(51.0, 5.0, 4, 0.5).unwrap();
    let a = derive_snr_params(&spec(0.0, 51.0), &r, 1.0).unwrap();
    let b = derive_snr_params(&spec(10.0, 51.0), &r, 1.0).unwrap();
    assert_relative_eq!(a.c1.unwrap(), b.c1.unwrap(), max_relative = 1e-10);
}

#[test]
fn noncentralities_linear_in_k() {
    let r = laplacian_correlation(30.0, 5.0, 4, 0.5).unwrap();
    let base = derive_snr_params(&spec(10.0 * 0.1f64.log10(), 30.0), &r, 1.0).unwrap();
    for k in [0.2, 0.4, 0.8] {
        let p = derive_snr_params(&spec(10.0 * f64::log10(k), 30.0), &r, 1.0).unwrap();
        assert_relative_eq!(p.x1 / base.x1, k / 0.1, max_relative = 1e-10);
        assert_relative_eq!(p.x2 / base.x2, k / 0.1, max_relative = 1e-10);
    }
}

#[test]
fn winner_sampler() {
    let cfg = WinnerConfig::placeholder();
    assert!(sample_winner_params(Scenario::A1, 0, 1, &cfg)
        .unwrap()
        .is_empty());
    let draws = sample_winner_params(Scenario::A1, 2100, 42, &cfg).unwrap();
    assert_eq!(
        draws,
        sample_winner_params(Scenario::A1, 2100, 42, &cfg).unwrap()
    );
    let law = cfg.get(Scenario::A1).unwrap();
    let mean = draws.iter().map(|d| d.0).sum::<f64>() / draws.len() as f64;
    let se = law.k_db_std / (draws.len() as f64).sqrt();
    assert!((mean - law.k_db_mean).abs() < 3.0 * se);

    let mut flat = WinnerConfig::default();
    flat.scenarios.insert(
        Scenario::C2,
        LognormalLaw {
            k_db_mean: 7.0,
            k_db_std: 0.0,
            as_deg_mean: 11.0,
            as_log10_std: 0.0,
        },
    );
    for (k, a) in sample_winner_params(Scenario::C2, 10, 3, &flat).unwrap() {
        assert_eq!(k, 7.0);
        assert_relative_eq!(a, 11.0, max_relative = 1e-14);
    }
    assert!(sample_winner_params(Scenario::A1, 1, 1, &flat).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn normalization_invariance(as_deg in 5.0f64..80.0, alpha in 0.1f64..10.0, k_db in -10.0f64..15.0) {
        let s = spec(k_db, as_deg);
        let r = laplacian_correlation(as_deg, 5.0, 4, 0.5).unwrap();
        let scaled = CorrelationMatrix::normalized(&(&r.r_t * Complex64::new(alpha, 0.0)));
        let a = derive_snr_params(&s, &r, 3.0).unwrap();
        let b = derive_snr_params(&s, &scaled, 3.0).unwrap();
        prop_assert!((a.x1 - b.x1).abs() <= 1e-9 * a.x1.max(1e-12));
        prop_assert!((a.x2 - b.x2).abs() <= 1e-9 * a.x2);
        prop_assert!((a.gamma1 - b.gamma1).abs() <= 1e-9 * a.gamma1);
    }

    #[test]
    fn correlation_is_valid(as_deg in 1.0f64..100.0, theta_c in -60.0f64..60.0, n in 2usize..8) {
        let r = laplacian_correlation(as_deg, theta_c, n, 0.5).unwrap();
        prop_assert!(r.validate().is_ok());
    }

    #[test]
    fn c1_positive_and_k_free(as_deg in 5.0f64..80.0, theta_t in -40.0f64..40.0, k1 in -10.0f64..5.0, dk in 1.0f64..10.0) {
        let mut s = spec(k1, as_deg);
        s.theta_t_deg = theta_t;
        let r = s.correlation().unwrap();
        let a = derive_snr_params(&s, &r, 1.0).unwrap();
        let b = derive_snr_params(&s.with_k_db(k1 + dk), &r, 1.0).unwrap();
        prop_assert!(a.c1.unwrap() >= 0.0);
        prop_assert!((a.c1.unwrap() - b.c1.unwrap()).abs() <= 1e-9 * a.c1.unwrap().max(1e-12));
    }
}
