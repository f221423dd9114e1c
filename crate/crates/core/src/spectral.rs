//! Eigendecomposition of `V T̃ V` and the spectral MET series built on it.

use std::f64::consts::PI;

use faer::{Mat, Side};
use rayon::prelude::*;

use crate::asymptotics;
use crate::error::{Error, Result};
use crate::extrapolate::{extrapolate_partial_sums, Extrapolation};
use crate::operator::{psi_projection, OperatorMatrix};
use crate::params::{validate_grid, MetCurve, MetResult, ModelParams};

/// Eigenvalues below this fraction of `λ_1` are treated as zero.
pub const DEFAULT_EIG_TOL: f64 = 1e-12;
/// Relative truncation error above which a result carries a warning.
pub const DEFAULT_REL_TOL: f64 = 1e-3;
/// Fraction of the resolved eigenpairs used for partial-sum extrapolation.
/// The last few percent of a truncated decomposition are visibly degraded.
const RESOLVED_GUARD: f64 = 0.9;
const EXTRAPOLATION_POINTS: usize = 6;
/// Below this many usable pairs the partial sums are not extrapolated.
const MIN_EXTRAPOLATION_WINDOW: usize = 60;
/// Eigenpair residuals are spot-checked on this many pairs.
const RESIDUAL_SAMPLES: usize = 24;
const RESIDUAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
pub struct DecomposeOptions {
    pub eig_tol: f64,
    pub rel_tol: f64,
    /// Retain eigenvectors (costs another `N²` doubles).
    pub keep_eigenvectors: bool,
    /// Read the spectrum of an exactly diagonal matrix off its diagonal
    /// instead of running the dense solver.
    pub detect_diagonal: bool,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        Self {
            eig_tol: DEFAULT_EIG_TOL,
            rel_tol: DEFAULT_REL_TOL,
            keep_eigenvectors: false,
            detect_diagonal: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpectralData {
    pub n_trunc: usize,
    /// `λ_n`, descending; values within the tolerance of zero are clamped to 0.
    pub eigenvalues: Vec<f64>,
    /// `ψ_n²` aligned with `eigenvalues`.
    pub weights: Vec<f64>,
    pub params: ModelParams,
    /// Number of leading pairs that approximate the continuum spectrum.
    ///
    /// An extended target leaves about `Nε/π` near-null modes that only
    /// discretize the kernel of the operator, so at most `N(1 − ε/π)` pairs
    /// carry information about the nonzero spectrum.
    pub resolved: usize,
    /// Largest relative residual `‖Mv − λv‖/‖M‖` among the checked pairs.
    pub max_residual: f64,
    pub rel_tol: f64,
    eigenvectors: Option<Mat<f64>>,
}

pub fn decompose(m: &OperatorMatrix) -> Result<SpectralData> {
    decompose_with(m, DecomposeOptions::default())
}

pub fn decompose_with(m: &OperatorMatrix, opts: DecomposeOptions) -> Result<SpectralData> {
    let n = m.n_trunc();
    let params = *m.params();
    let proj = psi_projection(&params, n)?.coords;

    let raw = if opts.detect_diagonal && is_diagonal(m) {
        diagonal_decomposition(m, &proj, opts.keep_eigenvectors)
    } else {
        dense_decomposition(m, &proj, opts.keep_eigenvectors)?
    };
    let mut eigenvalues = raw.eigenvalues;

    let scale = eigenvalues.first().copied().unwrap_or(0.0).abs();
    let tol = opts.eig_tol * scale;
    for (i, l) in eigenvalues.iter_mut().enumerate() {
        if *l < -1e3 * tol.max(f64::MIN_POSITIVE) {
            return Err(Error::Convergence {
                index: i + 1,
                residual: l.abs() / scale.max(f64::MIN_POSITIVE),
            });
        }
        if *l <= tol {
            *l = 0.0;
        }
    }

    let positive = eigenvalues.iter().take_while(|l| **l > 0.0).count();
    let geometric = (n as f64 * (1.0 - params.epsilon / PI)).floor() as usize;
    let resolved = positive.min(geometric);

    Ok(SpectralData {
        n_trunc: n,
        eigenvalues,
        weights: raw.weights,
        params,
        resolved,
        max_residual: raw.max_residual,
        rel_tol: opts.rel_tol,
        eigenvectors: raw.vectors,
    })
}

struct RawDecomposition {
    eigenvalues: Vec<f64>,
    weights: Vec<f64>,
    max_residual: f64,
    vectors: Option<Mat<f64>>,
}

fn is_diagonal(m: &OperatorMatrix) -> bool {
    let n = m.n_trunc();
    m.as_slice()
        .iter()
        .enumerate()
        .all(|(k, x)| k / n == k % n || *x == 0.0)
}

/// Diagonal input: eigenpairs are read off directly, ordered by value.
fn diagonal_decomposition(m: &OperatorMatrix, proj: &[f64], keep: bool) -> RawDecomposition {
    let n = m.n_trunc();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.entry(j + 1, j + 1).total_cmp(&m.entry(i + 1, i + 1)));
    RawDecomposition {
        eigenvalues: order.iter().map(|&i| m.entry(i + 1, i + 1)).collect(),
        weights: order.iter().map(|&i| 2.0 / PI * proj[i] * proj[i]).collect(),
        max_residual: 0.0,
        vectors: keep.then(|| Mat::from_fn(n, n, |r, c| if order[c] == r { 1.0 } else { 0.0 })),
    }
}

fn dense_decomposition(m: &OperatorMatrix, proj: &[f64], keep: bool) -> Result<RawDecomposition> {
    let n = m.n_trunc();
    let evd = m
        .to_faer()
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::Convergence {
            index: 0,
            residual: f64::NAN,
        })?;
    let s = evd.S().column_vector();
    let u = evd.U();
    // faer returns ascending order; column `n − 1 − k` holds pair `k`.
    let eigenvalues: Vec<f64> = (0..n).rev().map(|k| s[k]).collect();
    let column = |k: usize| u.col(n - 1 - k);
    let weights = (0..n)
        .into_par_iter()
        .map(|k| {
            let v = column(k);
            let dot: f64 = (0..n).map(|r| v[r] * proj[r]).sum();
            2.0 / PI * dot * dot
        })
        .collect();
    let max_residual = spot_check_residuals(m, &eigenvalues, |k| {
        let v = column(k);
        (0..n).map(|r| v[r]).collect()
    })?;
    let vectors = keep.then(|| Mat::from_fn(n, n, |r, c| u[(r, n - 1 - c)]));
    Ok(RawDecomposition {
        eigenvalues,
        weights,
        max_residual,
        vectors,
    })
}

fn spot_check_residuals(
    m: &OperatorMatrix,
    eigenvalues: &[f64],
    vector: impl Fn(usize) -> Vec<f64> + Sync,
) -> Result<f64> {
    let n = eigenvalues.len();
    let norm = eigenvalues
        .iter()
        .fold(0.0f64, |acc, l| acc.max(l.abs()))
        .max(f64::MIN_POSITIVE);
    let mut picks: Vec<usize> = (0..RESIDUAL_SAMPLES)
        .map(|k| k * (n - 1) / (RESIDUAL_SAMPLES - 1))
        .collect();
    picks.dedup();
    let residuals: Vec<(usize, f64)> = picks
        .par_iter()
        .map(|&c| {
            let v = vector(c);
            let mv = m.apply(&v);
            let r2: f64 = mv
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - eigenvalues[c] * b).powi(2))
                .sum();
            (c, r2.sqrt() / norm)
        })
        .collect();
    let mut worst = 0.0f64;
    for (c, r) in residuals {
        if !(r <= RESIDUAL_TOL) {
            return Err(Error::Convergence {
                index: c + 1,
                residual: r,
            });
        }
        worst = worst.max(r);
    }
    Ok(worst)
}

impl SpectralData {
    /// Pairs entering extrapolated sums: the resolved count minus a guard band.
    pub fn usable(&self) -> usize {
        if self.params.is_point_target() {
            self.resolved
        } else {
            (RESOLVED_GUARD * self.resolved as f64).floor() as usize
        }
    }

    /// `max |UᵀU − I|`, when eigenvectors were retained.
    pub fn orthonormality_defect(&self) -> Option<f64> {
        let u = self.eigenvectors.as_ref()?;
        let g = u.transpose() * u;
        let n = g.nrows();
        let mut worst = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - target).abs());
            }
        }
        Some(worst)
    }

    pub fn eigenvector(&self, index: usize) -> Option<Vec<f64>> {
        let u = self.eigenvectors.as_ref()?;
        Some((0..u.nrows()).map(|r| u[(r, index)]).collect())
    }

    /// Extrapolates `Σ_n term(λ_n, ψ_n²)` over the positive resolved pairs.
    pub fn extrapolated_sum(&self, term: impl Fn(f64, f64) -> f64) -> Result<Extrapolation> {
        let k_use = self.usable();
        let mut partial = Vec::with_capacity(k_use);
        let mut acc = 0.0;
        for (l, w) in self.eigenvalues.iter().zip(&self.weights).take(k_use) {
            if *l > 0.0 {
                acc += term(*l, *w);
            }
            partial.push(acc);
        }
        if k_use < MIN_EXTRAPOLATION_WINDOW {
            let half = partial.get(k_use / 2).copied().unwrap_or(0.0);
            return Ok(Extrapolation {
                limit: acc,
                residual_estimate: (acc - half).abs(),
                fit_rms: 0.0,
                condition: 1.0,
            });
        }
        let points: Vec<(usize, f64)> = (1..=EXTRAPOLATION_POINTS)
            .map(|j| {
                let k = k_use * j / EXTRAPOLATION_POINTS;
                (k, partial[k - 1])
            })
            .collect();
        extrapolate_partial_sums(&points)
    }

    /// Extrapolated `Σ ψ_n²/λ_n`, which equals `⟨T̃(1), 1⟩ = (π − ε)³/3`.
    pub fn spectral_identity_sum(&self) -> Result<Extrapolation> {
        self.extrapolated_sum(|l, w| w / l)
    }

    fn finish(&self, value: f64, ex: &Extrapolation, scale: f64, extrapolated: bool) -> MetResult {
        MetResult {
            value: value.max(0.0),
            truncation_n: self.usable(),
            extrapolated,
            residual_estimate: ex.residual_estimate * scale.abs(),
            truncation_warning: false,
        }
        .flag(self.rel_tol)
    }

    fn extrapolates(&self) -> bool {
        self.usable() >= MIN_EXTRAPOLATION_WINDOW
    }
}

/// Mean exit time at desorption rate `lambda`, averaged over a uniform start.
///
/// Uses `(1/π)(1/λ + c/(4D2)) Σ ψ_n²/(λ_n(D1/λ + λ_n))`, which has no
/// cancellation at large `λ`; at `λ = 0` the series drops out and the
/// surface-only value is returned exactly.
pub fn met(s: &SpectralData, lambda: f64) -> Result<MetResult> {
    let p = s.params.with_lambda(lambda).validate()?;
    let l = p.free_arc();
    if lambda == 0.0 || l == 0.0 {
        return Ok(MetResult::exact(l.powi(3) / (3.0 * PI * p.d1), s.n_trunc));
    }
    let prefactor = (1.0 / lambda + p.ejection_factor() / (4.0 * p.d2)) / PI;
    let ratio = p.d1 / lambda;
    let ex = s.extrapolated_sum(|ln, w| w / (ln * (ratio + ln)))?;
    Ok(s.finish(prefactor * ex.limit, &ex, prefactor, s.extrapolates()))
}

/// The same quantity through `(1/(πD1)) F(λ) [(π−ε)³/3 − μ Σ ψ_n²/(1 + μλ_n)]`.
pub fn met_direct(s: &SpectralData, lambda: f64) -> Result<MetResult> {
    let p = s.params.with_lambda(lambda).validate()?;
    let l = p.free_arc();
    if lambda == 0.0 || l == 0.0 {
        return Ok(MetResult::exact(l.powi(3) / (3.0 * PI * p.d1), s.n_trunc));
    }
    let mu = lambda / p.d1;
    let prefactor = p.intermittency_factor(lambda) / (PI * p.d1);
    let ex = s.extrapolated_sum(|ln, w| w / (1.0 + mu * ln))?;
    let value = prefactor * (l.powi(3) / 3.0 - mu * ex.limit);
    Ok(s.finish(value, &ex, prefactor * mu, s.extrapolates()))
}

/// Large-rate limit `𝒯 = c/(4πD2) Σ ψ_n²/λ_n²` of the mean exit time.
pub fn met_limit(s: &SpectralData) -> Result<MetResult> {
    let p = s.params;
    p.require_extended_target("the large-rate limit")?;
    if p.free_arc() == 0.0 {
        return Ok(MetResult::exact(0.0, s.n_trunc));
    }
    let prefactor = p.ejection_factor() / (4.0 * PI * p.d2);
    let ex = s.extrapolated_sum(|l, w| w / (l * l))?;
    Ok(s.finish(prefactor * ex.limit, &ex, prefactor, s.extrapolates()))
}

pub fn met_curve(s: &SpectralData, lambdas: &[f64]) -> Result<MetCurve> {
    validate_grid(lambdas)?;
    let results: Vec<MetResult> = lambdas
        .par_iter()
        .map(|l| met(s, *l))
        .collect::<Result<_>>()?;
    let degenerate = lambdas.iter().all(|l| *l == 0.0);
    let (limit_t, c1) = if s.params.epsilon > 0.0 && !degenerate {
        let limit = met_limit(s)?.value;
        let c1 = asymptotics::fit_asymptotics(s)
            .and_then(|fit| asymptotics::c1_coefficient(&fit, &s.params))
            .ok();
        (Some(limit), c1)
    } else {
        (None, None)
    };
    Ok(MetCurve {
        lambdas: lambdas.to_vec(),
        values: results.iter().map(|r| r.value).collect(),
        residual_estimates: results.iter().map(|r| r.residual_estimate).collect(),
        limit_t,
        c1,
    })
}

/// Slope of `π D1 ⟨t1⟩` at `λ = 0`: `c(π−ε)³/(12 D2) − Σψ_n²/D1`.
///
/// `Σψ_n² = (2/π) Σ_m ⟨ψ, cos mθ⟩²` is summed directly from the projections.
pub fn initial_slope(p: &ModelParams) -> Result<f64> {
    let p = p.validate()?;
    let proj = psi_projection(&p, 200_000)?;
    let norm2 = 2.0 / PI * proj.coords.iter().rev().map(|c| c * c).sum::<f64>();
    Ok(p.ejection_factor() * p.free_arc().powi(3) / (12.0 * p.d2) - norm2 / p.d1)
}

/// Minimizer of `met(λ)` inside `bracket`, or `None` when the curve starts
/// increasing at `λ = 0`.
pub fn find_optimal_lambda(s: &SpectralData, bracket: (f64, f64)) -> Result<Option<f64>> {
    let (lo, hi) = bracket;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::Unsupported(format!(
            "bracket must satisfy 0 < lo < hi, got [{lo}, {hi}]"
        )));
    }
    if initial_slope(&s.params)? >= 0.0 {
        return Ok(None);
    }
    let f = |x: f64| met(s, x.exp()).map(|r| r.value);
    let slope = |x: f64| -> Result<f64> {
        let h = 1e-4;
        Ok((f(x + h)? - f(x - h)?) / (2.0 * h))
    };
    let (mut a, mut b) = (lo.ln(), hi.ln());
    if !(slope(a)? < 0.0 && slope(b)? > 0.0) {
        return Err(Error::Bracket { lo, hi });
    }
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    while b - a > 1e-8 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2)?;
        }
    }
    Ok(Some((0.5 * (a + b)).exp()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::assemble_vtv;

    fn spectral(a: f64, eps: f64, d2: f64, n: usize) -> SpectralData {
        let p = ModelParams::new(a, eps, 1.0, d2, 0.0).unwrap();
        decompose(&assemble_vtv(&p, n).unwrap()).unwrap()
    }

    #[test]
    fn point_target_spectrum_is_exact() {
        let a = 0.3;
        let s = spectral(a, 0.0, 1.0, 200);
        for (i, l) in s.eigenvalues.iter().enumerate() {
            let n = (i + 1) as f64;
            assert!((l - (1.0 - (1.0 - a).powf(n)) / (n * n)).abs() < 1e-15);
        }
        assert_eq!(s.resolved, 200);
    }

    #[test]
    fn full_target_has_no_weight() {
        let s = spectral(0.2, PI, 1.0, 32);
        assert!(s.weights.iter().all(|w| *w < 1e-25));
        assert_eq!(met(&s, 3.0).unwrap().value, 0.0);
    }

    #[test]
    fn leading_eigenvalue_matches_power_iteration() {
        let p = ModelParams::new(0.001, 0.1, 1.0, 1.0, 0.0).unwrap();
        let m = assemble_vtv(&p, 512).unwrap();
        let s = decompose(&m).unwrap();
        let mut v = vec![1.0; 512];
        let mut rayleigh = 0.0;
        for _ in 0..2000 {
            let w = m.apply(&v);
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            rayleigh = v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
                / v.iter().map(|x| x * x).sum::<f64>();
            v = w.into_iter().map(|x| x / norm).collect();
        }
        assert!(
            ((s.eigenvalues[0] - rayleigh) / rayleigh).abs() < 1e-9,
            "{} vs {rayleigh}",
            s.eigenvalues[0]
        );
    }

    #[test]
    fn eigenvectors_are_orthonormal() {
        let p = ModelParams::new(0.05, 0.3, 1.0, 1.0, 0.0).unwrap();
        let m = assemble_vtv(&p, 256).unwrap();
        let s = decompose_with(
            &m,
            DecomposeOptions {
                keep_eigenvectors: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(s.orthonormality_defect().unwrap() <= 1e-10);
        assert!(s.max_residual <= 1e-12);
    }

    #[test]
    fn zero_rate_is_the_surface_value() {
        let s = spectral(0.1, 0.01, 1.0, 128);
        let r = met(&s, 0.0).unwrap();
        let expected = (PI - 0.01f64).powi(3) / (3.0 * PI);
        assert!(((r.value - expected) / expected).abs() < 1e-12);
        assert!((r.value - 3.2586).abs() < 5e-5);
        assert!(!r.extrapolated);
    }

    #[test]
    fn both_forms_agree() {
        let s = spectral(0.1, 0.3, 1.0, 512);
        for lambda in [0.1, 1.0, 10.0, 100.0] {
            let a = met(&s, lambda).unwrap();
            let b = met_direct(&s, lambda).unwrap();
            let tol = a.residual_estimate + b.residual_estimate;
            assert!((a.value - b.value).abs() <= tol, "λ={lambda}: {a:?} {b:?}");
        }
    }

    #[test]
    fn spectral_identity_holds() {
        let s = spectral(0.1, 0.5, 1.0, 512);
        let ex = s.spectral_identity_sum().unwrap();
        let target = (PI - 0.5f64).powi(3) / 3.0;
        assert!(((ex.limit - target) / target).abs() < 1e-3);
    }

    #[test]
    fn limit_rejects_point_target() {
        let s = spectral(0.1, 0.0, 1.0, 16);
        assert!(matches!(met_limit(&s), Err(Error::Unsupported(_))));
    }

    #[test]
    fn single_point_curve() {
        let s = spectral(0.1, 0.2, 1.0, 64);
        let c = met_curve(&s, &[0.0]).unwrap();
        assert_eq!(c.len(), 1);
        assert!(c.limit_t.is_none() && c.c1.is_none());
        let expected = (PI - 0.2f64).powi(3) / (3.0 * PI);
        assert!((c.values[0] - expected).abs() < 1e-14);
        assert!(met_curve(&s, &[1.0, 0.5]).is_err());
    }

    #[test]
    fn no_optimum_below_the_critical_ratio() {
        let s = spectral(0.01, 0.0, 0.5, 64);
        assert_eq!(find_optimal_lambda(&s, (1e-2, 1e4)).unwrap(), None);
    }
}
