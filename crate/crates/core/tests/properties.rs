use std::f64::consts::PI;

use escape_spectral::asymptotics::fit_asymptotics;
use escape_spectral::closed_form::{met_transportation_limit, met_bulk_only};
use escape_spectral::montecarlo::{simulate_met, BulkMode, SimConfig};
use escape_spectral::spectral::met_direct;
use escape_spectral::{
    assemble_vtv, decompose, met, met_curve, met_limit, Error, ModelParams, OperatorMatrix,
    SpectralData,
};
use proptest::prelude::*;

fn spectrum(a: f64, eps: f64, d1: f64, d2: f64, n: usize) -> SpectralData {
    let p = ModelParams::new(a, eps, d1, d2, 0.0).unwrap();
    decompose(&assemble_vtv(&p, n).unwrap()).unwrap()
}

fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (l, h) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (l + (h - l) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn validation_is_idempotent(
        a in -0.5f64..1.5, eps in -0.5f64..4.0, d1 in -1.0f64..3.0, d2 in -1.0f64..3.0, lambda in -1.0f64..10.0,
    ) {
        let raw = ModelParams { a, epsilon: eps, d1, d2, lambda };
        match raw.validate() {
            Ok(p) => {
                prop_assert_eq!(p.validate().unwrap(), p);
                prop_assert!(a > 0.0 && a <= 1.0 && (0.0..=PI).contains(&eps));
                prop_assert!(d1 > 0.0 && d2 > 0.0 && lambda >= 0.0);
            }
            Err(Error::Domain { name, .. }) => {
                let violated = [
                    ("a", !(a > 0.0 && a <= 1.0)),
                    ("epsilon", !(0.0..=PI).contains(&eps)),
                    ("D1", d1 <= 0.0),
                    ("D2", d2 <= 0.0),
                    ("lambda", lambda < 0.0),
                ];
                prop_assert!(violated.iter().any(|(n, bad)| *n == name && *bad));
            }
            Err(other) => prop_assert!(false, "unexpected {other:?}"),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn zero_rate_drops_the_series(a in 0.01f64..1.0, eps in 0.0f64..3.0, d1 in 0.2f64..5.0) {
        let s = spectrum(a, eps, d1, 1.0, 128);
        let v = met(&s, 0.0).unwrap().value;
        let exact = (PI - eps).powi(3) / (3.0 * PI * d1);
        prop_assert!(((v - exact) / exact).abs() <= 1e-12);
    }

    #[test]
    fn met_forms_agree(
        a in 0.02f64..1.0, eps in 0.05f64..1.5, d2 in 0.3f64..3.0, log_lambda in -2.0f64..4.0,
    ) {
        let s = spectrum(a, eps, 1.0, d2, 320);
        let lambda = 10f64.powf(log_lambda);
        let f2 = met(&s, lambda).unwrap();
        let f1 = met_direct(&s, lambda).unwrap();
        let tol = f1.residual_estimate + f2.residual_estimate + 1e-12 * f2.value;
        prop_assert!((f1.value - f2.value).abs() <= tol,
            "{} vs {} (tol {tol:e})", f1.value, f2.value);
    }

    #[test]
    fn eventually_increasing(a in 0.02f64..1.0, eps in 0.05f64..1.5, d2 in 0.3f64..3.0) {
        let s = spectrum(a, eps, 1.0, d2, 320);
        let grid = log_grid(1e-2, 1e6, 41);
        let c = met_curve(&s, &grid).unwrap();
        let last_non_increase = c.values.windows(2).rposition(|w| w[1] <= w[0]);
        let threshold = last_non_increase.map_or(grid[0], |k| grid[k + 1]);
        prop_assert!(threshold < 1e6, "never settles into increase");
        // Every value beyond the threshold stays below the large-rate limit.
        let t = met_limit(&s).unwrap();
        prop_assert!(c.values[40] <= t.value + t.residual_estimate + c.residual_estimates[40]);
    }
}

#[test]
fn spectral_identity_on_grid() {
    for eps in [0.01, 0.1, 1.0] {
        for a in [0.001, 0.01, 0.1] {
            let s = spectrum(a, eps, 1.0, 1.0, 1024);
            let sum = s.spectral_identity_sum().unwrap().limit;
            let exact = (PI - eps).powi(3) / 3.0;
            assert!(((sum - exact) / exact).abs() < 0.005, "a={a} ε={eps}: {sum} vs {exact}");
        }
    }
}

#[test]
fn transportation_matches_spectral_limit() {
    for eps in [0.01, 0.1] {
        let s = spectrum(1.0, eps, 1.0, 1.0, 1024);
        let t = met_limit(&s).unwrap().value;
        let closed = met_transportation_limit(eps, 1.0).unwrap().value;
        assert!(((t - closed) / closed).abs() < 0.01, "ε={eps}: {t} vs {closed}");
    }
}

#[test]
fn large_rate_correction_approaches_from_below() {
    for (a, eps, d2) in [(0.01, 0.1, 1.0), (0.1, 0.5, 2.0), (0.05, 1.0, 0.5)] {
        let s = spectrum(a, eps, 1.0, d2, 1024);
        let fit = fit_asymptotics(&s).unwrap();
        let c1 = fit.c1.expect("ε > 0 has a weight tail");
        let t = met_limit(&s).unwrap().value;
        assert!(c1 > 0.0);
        for lambda in [1e2, 1e4, 1e8] {
            assert!(t - c1 / f64::sqrt(lambda) < t);
        }
    }
}

#[test]
fn bulk_only_is_the_constant_mode_value() {
    for eps in [0.01, 0.3, 2.0] {
        let r = met_bulk_only(eps, 2.0, 100_000).unwrap();
        let exact = -(eps / 2.0).sin().ln() / 2.0;
        assert!((r.value - exact).abs() <= r.residual_estimate.max(1e-12), "{} vs {exact}", r.value);
    }
}

#[test]
fn cache_round_trip() {
    let dir = std::env::temp_dir().join(format!("escape-spectral-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("m.vtvm");
    let p = ModelParams::new(0.2, 0.3, 1.0, 1.0, 0.0).unwrap();
    let m = assemble_vtv(&p, 64).unwrap();
    m.write_cache(&path).unwrap();
    let back = OperatorMatrix::read_cache(&path, &p).unwrap();
    assert_eq!(back.as_slice(), m.as_slice());
    let other = ModelParams::new(0.3, 0.3, 1.0, 1.0, 0.0).unwrap();
    assert!(matches!(OperatorMatrix::read_cache(&path, &other), Err(Error::Format(_))));
    std::fs::remove_dir_all(&dir).unwrap();
}

fn mc(a: f64, eps: f64, lambda: f64, paths: usize, mode: BulkMode) -> (f64, f64) {
    let p = ModelParams::new(a, eps, 1.0, 1.0, lambda).unwrap();
    let mut cfg = SimConfig::new(p, paths, 11);
    cfg.bulk_mode = mode;
    let e = simulate_met(&cfg).unwrap();
    (e.mean, e.stderr)
}

#[test]
fn simulated_met_decreases_with_target_size() {
    let (small, s1) = mc(0.2, 0.2, 1.0, 8000, BulkMode::ExactJump);
    let (large, s2) = mc(0.2, 0.8, 1.0, 8000, BulkMode::ExactJump);
    assert!(small - large > 3.0 * (s1 * s1 + s2 * s2).sqrt(), "{small} vs {large}");
}

#[test]
fn bulk_modes_agree() {
    for (a, eps, lambda) in [(0.3, 0.5, 1.0), (0.5, 1.0, 5.0)] {
        let (m1, s1) = mc(a, eps, lambda, 6000, BulkMode::ExactJump);
        let (m2, s2) = mc(a, eps, lambda, 3000, BulkMode::Euler);
        let z = (m1 - m2).abs() / (s1 * s1 + s2 * s2).sqrt();
        assert!(z < 3.0, "a={a} ε={eps} λ={lambda}: {m1} vs {m2} (z={z:.2})");
    }
}

#[test]
fn simulation_matches_spectrum() {
    let s = spectrum(0.3, 0.4, 1.0, 1.0, 512);
    for lambda in [0.5, 4.0] {
        let v = met(&s, lambda).unwrap().value;
        let (m, se) = mc(0.3, 0.4, lambda, 20_000, BulkMode::ExactJump);
        assert!((m - v).abs() < 3.0 * se + 1e-3 * v, "λ={lambda}: {m} ± {se} vs {v}");
    }
}
