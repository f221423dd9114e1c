//! Power-law regimes of the spectrum and the coefficients built from them.
//!
//! Eigenvalues behave like `Ã/n` below the crossover `n ≈ 1/a` and like
//! `A_ε/n²` above it. Weights cross over at both `1/a` and `1/ε`: `n⁻³`
//! below the smaller, `n⁻⁴` in between, `n⁻⁶` beyond the larger (for a
//! point target the last regime never arrives and `n⁻⁴` persists).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::spectral::{decompose, met_limit, SpectralData};
use crate::operator::assemble_vtv;

/// Samples within this factor of a crossover are excluded from every window.
pub const GUARD_FACTOR: f64 = 3.0;
const MIN_WINDOW_POINTS: usize = 3;
/// The tail fits need at least this ratio between their window ends.
const MIN_TAIL_SPAN: f64 = 1.5;

/// Power law `y ≈ C n^p` fitted in log–log space on `n ∈ [lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub window: (usize, usize),
    pub nominal_exponent: f64,
    /// `C` with the exponent held at its nominal value.
    pub coefficient: f64,
    /// Least-squares slope in log–log space.
    pub free_exponent: f64,
    /// Relative RMS misfit of the fixed-exponent law.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenvalueRegimes {
    /// `Ã`; absent when `1/a` is too small to leave a head window.
    pub head: Option<PowerLawFit>,
    /// `A_ε`.
    pub tail: PowerLawFit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightRegimes {
    /// `B̃`, exponent −3.
    pub head: Option<PowerLawFit>,
    /// `B̃′`, exponent −4; absent when `1/a` and `1/ε` are too close.
    pub intermediate: Option<PowerLawFit>,
    /// `B`, exponent −6; absent for a point target.
    pub tail: Option<PowerLawFit>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticFit {
    pub a_eps: f64,
    pub a_tilde: Option<f64>,
    pub b_eps: Option<f64>,
    pub b_tilde: Option<f64>,
    pub b_prime: Option<f64>,
    pub c1: Option<f64>,
    pub eigenvalues: EigenvalueRegimes,
    pub weights: WeightRegimes,
}

/// Fits `y_n` on `n ∈ [lo, hi]` (1-based), skipping non-positive samples.
pub fn fit_power_law(y: &[f64], lo: usize, hi: usize, nominal: f64) -> Result<PowerLawFit> {
    let pts: Vec<(f64, f64)> = (lo..=hi.min(y.len()))
        .filter(|n| y[n - 1] > 0.0)
        .map(|n| ((n as f64).ln(), y[n - 1].ln()))
        .collect();
    if pts.len() < MIN_WINDOW_POINTS {
        return Err(Error::WindowTooSmall {
            lo,
            hi,
            required_n: lo + MIN_WINDOW_POINTS,
        });
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let log_c = pts.iter().map(|p| p.1 - nominal * p.0).sum::<f64>() / m;
    let residual = (pts
        .iter()
        .map(|p| ((p.1 - nominal * p.0 - log_c).exp() - 1.0).powi(2))
        .sum::<f64>()
        / m)
        .sqrt();
    Ok(PowerLawFit {
        window: (lo, hi),
        nominal_exponent: nominal,
        coefficient: log_c.exp(),
        free_exponent: sxy / sxx,
        residual,
    })
}

/// `[1, x/3]` if it holds enough samples.
fn head_window(crossover: f64) -> Option<(usize, usize)> {
    let hi = (crossover / GUARD_FACTOR).floor();
    (hi >= MIN_WINDOW_POINTS as f64).then_some((1, hi as usize))
}

fn tail_window(s: &SpectralData, crossover: f64, floor: usize) -> Result<(usize, usize)> {
    let lo = ((GUARD_FACTOR * crossover).ceil() as usize).max(floor);
    let hi = s.usable();
    if (hi as f64) < MIN_TAIL_SPAN * lo as f64 {
        // usable ≈ 0.9 N (1 − ε/π)
        let frac = 0.9 * (1.0 - s.params.epsilon / std::f64::consts::PI);
        return Err(Error::WindowTooSmall {
            lo,
            hi,
            required_n: (MIN_TAIL_SPAN * lo as f64 / frac).ceil() as usize + 1,
        });
    }
    Ok((lo, hi))
}

pub fn fit_eigenvalue_regimes(s: &SpectralData) -> Result<EigenvalueRegimes> {
    let cross = 1.0 / s.params.a;
    let head = match head_window(cross) {
        Some((lo, hi)) => Some(fit_power_law(&s.eigenvalues, lo, hi, -1.0)?),
        None => None,
    };
    let (lo, hi) = tail_window(s, cross, 10)?;
    let tail = fit_power_law(&s.eigenvalues, lo, hi, -2.0)?;
    Ok(EigenvalueRegimes { head, tail })
}

pub fn fit_weight_regimes(s: &SpectralData) -> Result<WeightRegimes> {
    let p = &s.params;
    let inv_a = 1.0 / p.a;
    let inv_eps = if p.epsilon > 0.0 { 1.0 / p.epsilon } else { f64::INFINITY };
    let (n1, n2) = (inv_a.min(inv_eps), inv_a.max(inv_eps));
    let w = &s.weights;
    let head = match head_window(n1) {
        Some((lo, hi)) => Some(fit_power_law(w, lo, hi, -3.0)?),
        None => None,
    };
    let mid_lo = (GUARD_FACTOR * n1).ceil() as usize;
    let mid_hi = if n2.is_finite() {
        (n2 / GUARD_FACTOR).floor() as usize
    } else {
        s.usable()
    };
    let intermediate = if (mid_hi as f64) >= MIN_TAIL_SPAN * mid_lo as f64 {
        Some(fit_power_law(w, mid_lo, mid_hi, -4.0)?)
    } else {
        None
    };
    let tail = if n2.is_finite() {
        let (lo, hi) = tail_window(s, n2, 1)?;
        Some(fit_power_law(w, lo, hi, -6.0)?)
    } else {
        None
    };
    Ok(WeightRegimes {
        head,
        intermediate,
        tail,
    })
}

pub fn fit_asymptotics(s: &SpectralData) -> Result<AsymptoticFit> {
    let eig = fit_eigenvalue_regimes(s)?;
    let wts = fit_weight_regimes(s)?;
    let mut fit = AsymptoticFit {
        a_eps: eig.tail.coefficient,
        a_tilde: eig.head.map(|f| f.coefficient),
        b_eps: wts.tail.map(|f| f.coefficient),
        b_tilde: wts.head.map(|f| f.coefficient),
        b_prime: wts.intermediate.map(|f| f.coefficient),
        c1: None,
        eigenvalues: eig,
        weights: wts,
    };
    fit.c1 = c1_coefficient(&fit, &s.params).ok();
    Ok(fit)
}

/// `C1 = (√D1/D2) c B/(8 A^{5/2})`, the coefficient of `−λ^{-1/2}` in the
/// approach of the MET to its large-rate limit.
pub fn c1_coefficient(fit: &AsymptoticFit, p: &ModelParams) -> Result<f64> {
    let p = p.validate()?;
    p.require_extended_target("C1")?;
    let b = fit
        .b_eps
        .ok_or_else(|| Error::Unsupported("C1 needs the n^-6 weight tail".into()))?;
    Ok(p.d1.sqrt() / p.d2 * p.ejection_factor() * b / (8.0 * fit.a_eps.powf(2.5)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogDivergenceFit {
    pub epsilons: Vec<f64>,
    pub limits: Vec<f64>,
    /// Slope of the large-rate limit against `ln(1/ε)`.
    pub slope: f64,
    pub intercept: f64,
    /// RMS misfit divided by the mean limit.
    pub residual: f64,
}

/// Regresses the large-rate limit on `ln(1/ε)` across `eps_grid`.
pub fn check_log_divergence(
    a: f64,
    d2: f64,
    eps_grid: &[f64],
    n_trunc: usize,
) -> Result<LogDivergenceFit> {
    if eps_grid.len() < 2 {
        return Err(Error::Unsupported("need at least two target sizes".into()));
    }
    if let Some(bad) = eps_grid.iter().find(|e| !(**e > a && **e < 1.0)) {
        return Err(Error::Regime(format!(
            "epsilon = {bad} outside ({a}, 1); the reflection distance alters the logarithmic regime"
        )));
    }
    let mut limits = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        let p = ModelParams::new(a, eps, 1.0, d2, 0.0)?;
        let s = decompose(&assemble_vtv(&p, n_trunc)?)?;
        limits.push(met_limit(&s)?.value);
    }
    let xs: Vec<f64> = eps_grid.iter().map(|e| (1.0 / e).ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = limits.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&limits).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (xs
        .iter()
        .zip(&limits)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum::<f64>()
        / m)
        .sqrt();
    Ok(LogDivergenceFit {
        epsilons: eps_grid.to_vec(),
        limits,
        slope,
        intercept,
        residual: rms / my.abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spectral(a: f64, eps: f64, n: usize) -> SpectralData {
        let p = ModelParams::new(a, eps, 1.0, 1.0, 0.0).unwrap();
        decompose(&assemble_vtv(&p, n).unwrap()).unwrap()
    }

    #[test]
    fn exact_power_law_is_recovered() {
        let y: Vec<f64> = (1..=100).map(|n| 2.5 * (n as f64).powf(-3.0)).collect();
        let f = fit_power_law(&y, 10, 90, -3.0).unwrap();
        assert!((f.coefficient - 2.5).abs() < 1e-12);
        assert!((f.free_exponent + 3.0).abs() < 1e-12);
        assert!(f.residual < 1e-12);
        assert!(fit_power_law(&y, 10, 11, -3.0).is_err());
    }

    #[test]
    fn point_target_eigenvalue_regimes() {
        let a = 0.01;
        let s = spectral(a, 0.0, 4000);
        let eig = fit_eigenvalue_regimes(&s).unwrap();
        let head = eig.head.unwrap();
        assert_eq!(head.window, (1, 33));
        assert!(((head.coefficient - a) / a).abs() < 0.15, "{}", head.coefficient);
        assert!((eig.tail.coefficient - 1.0).abs() < 0.05, "{}", eig.tail.coefficient);
        assert!((eig.tail.free_exponent + 2.0).abs() < 0.15);
    }

    #[test]
    fn point_target_weight_head() {
        let a = 0.01;
        let s = spectral(a, 0.0, 2000);
        let w = fit_weight_regimes(&s).unwrap();
        let b = w.head.unwrap().coefficient;
        let expected = 2.0 * std::f64::consts::PI * a;
        assert!(((b - expected) / expected).abs() < 0.15, "{b} vs {expected}");
        assert!(w.tail.is_none());
        assert!((w.intermediate.unwrap().free_exponent + 4.0).abs() < 0.15);
    }

    #[test]
    fn small_truncation_reports_required_size() {
        let s = spectral(0.01, 0.1, 256);
        match fit_eigenvalue_regimes(&s) {
            Err(Error::WindowTooSmall { lo, required_n, .. }) => {
                assert_eq!(lo, 300);
                assert!(required_n > 450);
                assert!(fit_eigenvalue_regimes(&spectral(0.01, 0.1, required_n)).is_ok());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn equal_crossovers_drop_the_intermediate_regime() {
        let s = spectral(0.1, 0.1, 400);
        let w = fit_weight_regimes(&s).unwrap();
        assert!(w.intermediate.is_none());
        assert!(w.tail.is_some());
    }

    #[test]
    fn c1_scales_inversely_with_d2() {
        let s = spectral(0.1, 0.3, 600);
        let fit = fit_asymptotics(&s).unwrap();
        let p1 = ModelParams::new(0.1, 0.3, 1.0, 1.0, 0.0).unwrap();
        let p2 = ModelParams::new(0.1, 0.3, 1.0, 2.0, 0.0).unwrap();
        let c1 = c1_coefficient(&fit, &p1).unwrap();
        let c2 = c1_coefficient(&fit, &p2).unwrap();
        assert!(c1 > 0.0);
        assert!((c1 / c2 - 2.0).abs() < 1e-12);
        let p0 = ModelParams::new(0.1, 0.0, 1.0, 1.0, 0.0).unwrap();
        assert!(c1_coefficient(&fit, &p0).is_err());
    }

    #[test]
    fn log_divergence_rejects_grid_below_a() {
        let err = check_log_divergence(0.1, 1.0, &[0.01, 0.05], 64);
        assert!(matches!(err, Err(Error::Regime(_))));
    }
}
