//! Closed-form and single-series expressions. None of these touch a
//! decomposition, so they double as oracles for the spectral engine.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{one_minus_pow, MetResult, ModelParams};

pub const DEFAULT_SERIES_TERMS: usize = 1_000_000;
pub const DEFAULT_BULK_TERMS: usize = 100_000;
pub const ZETA_3: f64 = 1.202_056_903_159_594_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsPair {
    pub lower: f64,
    pub upper: f64,
}

fn require_point_target(p: &ModelParams, what: &str) -> Result<()> {
    if p.is_point_target() {
        Ok(())
    } else {
        Err(Error::Unsupported(format!("{what} requires epsilon = 0")))
    }
}

fn require_terms(n_terms: usize) -> Result<()> {
    if n_terms == 0 {
        Err(Error::Unsupported("n_terms must be at least 1".into()))
    } else {
        Ok(())
    }
}

/// `∫_{N+1/2}^∞ dx/(x² + k)`: midpoint estimate of `Σ_{n>N} 1/(n² + k)`.
fn lorentzian_tail(n_terms: usize, k: f64) -> f64 {
    let x0 = n_terms as f64 + 0.5;
    if k <= 0.0 {
        return 1.0 / x0;
    }
    let r = k.sqrt();
    (0.5 * PI - (x0 / r).atan()) / r
}

/// Sums `terms(n)` for `n = n_terms..=1`, smallest terms first.
fn reverse_sum(n_terms: usize, term: impl Fn(usize) -> f64) -> f64 {
    (1..=n_terms).rev().map(term).sum()
}

/// `(1 − (1 − a)^n)` for `n = 1..=len` (index `n − 1`).
fn ejection_weights(a: f64, len: usize) -> Vec<f64> {
    (1..=len).map(|n| one_minus_pow(a, n as f64)).collect()
}

/// `(2/D1) F(λ) Σ_{n≥1} 1/(n² + (λ/D1)(1 − (1 − a)^n))` for a point target.
pub fn met_point_target(p: &ModelParams, n_terms: usize) -> Result<MetResult> {
    let p = p.validate()?;
    require_point_target(&p, "the point-target series")?;
    require_terms(n_terms)?;
    let mu = p.lambda / p.d1;
    let c = ejection_weights(p.a, n_terms);
    let head = reverse_sum(n_terms, |n| {
        let nf = n as f64;
        1.0 / (nf * nf + mu * c[n - 1])
    });
    // Beyond the truncation (1 − a)^n is taken as 0; the neglected part and
    // the midpoint-rule error bound the residual.
    let tail = lorentzian_tail(n_terms, mu);
    let x0 = n_terms as f64 + 0.5;
    let tail_err = tail * (1.0 - c[n_terms - 1]) + 1.0 / (12.0 * x0.powi(3));
    let scale = 2.0 / p.d1 * p.intermittency_factor(p.lambda);
    Ok(MetResult {
        value: scale * (head + tail),
        truncation_n: n_terms,
        extrapolated: false,
        residual_estimate: scale * tail_err,
        truncation_warning: false,
    })
}

/// Lower and upper bounds on the point-target MET from
/// `Σ 1/(n² + μ) ≤ Σ 1/(n² + μ c_n) ≤ Σ 1/(n² + μa)`.
pub fn bounds_point_target(p: &ModelParams) -> Result<BoundsPair> {
    let p = p.validate()?;
    require_point_target(&p, "the point-target bounds")?;
    if p.lambda <= 0.0 {
        return Err(Error::Unsupported("bounds require lambda > 0".into()));
    }
    if p.a >= 1.0 {
        return Err(Error::Unsupported("the upper bound requires a < 1".into()));
    }
    let f = 1.0 - 2.0 / PI * (p.d1 / p.lambda).sqrt().atan();
    let fac = p.intermittency_factor(p.lambda);
    Ok(BoundsPair {
        lower: PI * f / (p.d1 * p.lambda).sqrt() * fac,
        upper: PI / (p.a * p.d1 * p.lambda).sqrt() * fac,
    })
}

/// Bulk coefficient above which a small desorption rate beats pure surface
/// diffusion.
pub fn d2_crit(p: &ModelParams, n_terms: usize) -> Result<f64> {
    let p = p.validate()?;
    require_terms(n_terms)?;
    let l = p.free_arc();
    if l == 0.0 {
        return Err(Error::Unsupported(
            "epsilon = pi: the weight series vanishes identically".into(),
        ));
    }
    let c = ejection_weights(p.a, n_terms);
    if p.is_point_target() {
        let s = reverse_sum(n_terms, |n| c[n - 1] / (n as f64).powi(4));
        return Ok(p.d1 * PI * PI * p.ejection_factor() / (24.0 * s));
    }
    let s = reverse_sum(n_terms, |n| {
        let nf = n as f64;
        let q = l * (nf * p.epsilon).cos() + (nf * p.epsilon).sin() / nf;
        c[n - 1] / nf.powi(4) * q * q
    });
    Ok(p.d1 * PI * l.powi(3) * p.ejection_factor() / 24.0 / s)
}

/// `a → 0` limit of the point-target critical coefficient, `D1 π²/(12 ζ(3))`.
pub fn d2_crit_bulk_limit(d1: f64) -> Result<f64> {
    if !(d1 > 0.0 && d1.is_finite()) {
        return Err(Error::Domain {
            name: "D1",
            value: d1,
            bound: "D1 > 0",
        });
    }
    Ok(d1 * PI * PI / (12.0 * ZETA_3))
}

/// `(π − ε)³/(3π D1)`: no desorption.
pub fn met_surface_only(p: &ModelParams) -> Result<MetResult> {
    let p = p.validate()?;
    Ok(MetResult::exact(p.free_arc().powi(3) / (3.0 * PI * p.d1), 0))
}

fn check_extended_eps(epsilon: f64, d2: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon <= PI) {
        return Err(Error::Domain {
            name: "epsilon",
            value: epsilon,
            bound: "0 < epsilon <= pi",
        });
    }
    if !(d2 > 0.0 && d2.is_finite()) {
        return Err(Error::Domain {
            name: "D2",
            value: d2,
            bound: "D2 > 0",
        });
    }
    Ok(())
}

/// Pure bulk diffusion from a uniform point on the circle.
pub fn met_bulk_only(epsilon: f64, d2: f64, n_terms: usize) -> Result<MetResult> {
    check_extended_eps(epsilon, d2)?;
    require_terms(n_terms)?;
    let x = epsilon.cos();
    let (mut p_prev, mut p_cur) = (1.0, x); // P_0, P_1
    let mut series = 0.0;
    for n in 1..=n_terms {
        let nf = n as f64;
        series += (nf * epsilon).sin() / (2.0 * nf * nf) * (p_cur + p_prev);
        let p_next = ((2.0 * nf + 1.0) * x * p_cur - nf * p_prev) / (nf + 1.0);
        p_prev = p_cur;
        p_cur = p_next;
    }
    let log_term = -(PI - epsilon) * (0.5 * epsilon).sin().ln();
    let scale = 1.0 / (PI * d2);
    Ok(MetResult {
        value: scale * (log_term + series),
        truncation_n: n_terms,
        extrapolated: false,
        // |P_n| ≤ 1 bounds each omitted term by 1/n².
        residual_estimate: scale / n_terms as f64,
        truncation_warning: false,
    })
}

/// `a = 1`: every ejection lands at the centre, `(π − ε)/(4 D2 ε)`.
pub fn met_transportation_limit(epsilon: f64, d2: f64) -> Result<MetResult> {
    check_extended_eps(epsilon, d2)?;
    Ok(MetResult::exact((PI - epsilon) / (4.0 * d2 * epsilon), 0))
}

/// MET with every off-diagonal element of `V T̃ V` dropped.
///
/// Evaluated in the split form `[L³/3 − 2Σ q²/(s n²)] + 2Σ q²/(s(n² + κ_n))`
/// so that the cancelling constant is explicit; it vanishes only for
/// `ε ∈ {0, π}`, which is why the approximation diverges at large `λ`.
pub fn met_diagonal_approx(p: &ModelParams, n_terms: usize) -> Result<MetResult> {
    let p = p.validate()?;
    require_terms(n_terms)?;
    let l = p.free_arc();
    if l == 0.0 {
        return Ok(MetResult::exact(0.0, n_terms));
    }
    let eps = p.epsilon;
    let kappa_scale = p.lambda / (PI * p.d1);
    let c = ejection_weights(p.a, n_terms);
    let weight = |n: usize| -> (f64, f64) {
        let nf = n as f64;
        if p.is_point_target() {
            return (PI, PI);
        }
        let q = l * (nf * eps).cos() + (nf * eps).sin() / nf;
        let s = l + (2.0 * nf * eps).sin() / (2.0 * nf);
        (q * q / s, s)
    };
    let mut constant = 0.0;
    let mut dynamic = 0.0;
    for n in (1..=n_terms).rev() {
        let nf = n as f64;
        let (w, s) = weight(n);
        dynamic += w / (nf * nf + kappa_scale * c[n - 1] * s);
        if !p.is_point_target() {
            constant += w / (nf * nf);
        }
    }
    // q²/s averages to π for ε = 0 and to L/2 otherwise.
    let mean_w = if p.is_point_target() { PI } else { 0.5 * l };
    let x0 = n_terms as f64 + 0.5;
    let bracket = if p.is_point_target() {
        0.0
    } else {
        l.powi(3) / 3.0 - 2.0 * (constant + mean_w / x0)
    };
    let k_tail = kappa_scale * if p.is_point_target() { PI } else { l };
    let dynamic = dynamic + mean_w * lorentzian_tail(n_terms, k_tail);
    let scale = p.intermittency_factor(p.lambda) / (PI * p.d1);
    let residual = if p.is_point_target() {
        2.0 * PI * (lorentzian_tail(n_terms, k_tail) * (1.0 - c[n_terms - 1])
            + 1.0 / (12.0 * x0.powi(3)))
    } else {
        // Oscillatory remainder of Σ cos(2nε)/n² beyond the truncation.
        2.0 * l / (eps * x0 * x0)
    };
    Ok(MetResult {
        value: scale * (bracket + 2.0 * dynamic),
        truncation_n: n_terms,
        extrapolated: false,
        residual_estimate: scale * residual,
        truncation_warning: false,
    })
}

/// Mode `n ≥ 0` of `T̃` on `[0, π − ε)` with Neumann condition at 0 and
/// Dirichlet condition at the target edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SturmLiouvilleMode {
    pub eigenvalue: f64,
    pub amplitude: f64,
    pub frequency: f64,
    pub support_end: f64,
}

impl SturmLiouvilleMode {
    pub fn profile(&self, theta: f64) -> f64 {
        if (0.0..self.support_end).contains(&theta.abs()) {
            self.amplitude * (self.frequency * theta).cos()
        } else {
            0.0
        }
    }
}

pub fn sturm_liouville_eigenbasis(epsilon: f64, n: usize) -> Result<SturmLiouvilleMode> {
    if !(epsilon >= 0.0 && epsilon < PI) {
        return Err(Error::Domain {
            name: "epsilon",
            value: epsilon,
            bound: "0 <= epsilon < pi",
        });
    }
    let l = PI - epsilon;
    let shrink = 1.0 - epsilon / PI;
    let k = n as f64 + 0.5;
    Ok(SturmLiouvilleMode {
        eigenvalue: shrink * shrink / (k * k),
        amplitude: (2.0 / l).sqrt(),
        frequency: k / shrink,
        support_end: l,
    })
}
