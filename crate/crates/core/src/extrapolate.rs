//! Partial-sum extrapolation by a quartic least-squares fit in `1/N`.

use faer::linalg::solvers::SolveLstsq;
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_POINTS: usize = 6;
const DEGREE: usize = 4;
/// Scaled-Vandermonde condition number above which the fit is refused.
const MAX_CONDITION: f64 = 1e10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extrapolation {
    /// Intercept `c0` of `f(N) ≈ c0 + c1/N + … + c4/N⁴`.
    pub limit: f64,
    /// `max(|c0⁽⁴⁾ − c0⁽³⁾|, |c0⁽³⁾ − c0⁽²⁾|)` over the quartic, cubic and
    /// quadratic fits to the same data. The quartic–cubic gap alone is
    /// routinely smaller than the actual error.
    pub residual_estimate: f64,
    /// Root-mean-square misfit of the quartic.
    pub fit_rms: f64,
    /// Ratio of extreme singular values of the scaled design matrix.
    pub condition: f64,
}

/// Extrapolates `f(N)` to `N → ∞` from `(N, f(N))` samples.
///
/// The abscissa is scaled to `u = N_min/N ∈ (0, 1]` before fitting, which
/// leaves the intercept unchanged and keeps the design matrix well scaled.
pub fn extrapolate_partial_sums(partials: &[(usize, f64)]) -> Result<Extrapolation> {
    if partials.len() < MIN_POINTS {
        return Err(Error::Unsupported(format!(
            "need at least {MIN_POINTS} partial sums, got {}",
            partials.len()
        )));
    }
    if partials[0].0 == 0 || partials.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::Unsupported(
            "partial-sum indices must be positive and strictly increasing".into(),
        ));
    }
    if let Some((n, _)) = partials.iter().find(|(_, f)| !f.is_finite()) {
        return Err(Error::Unsupported(format!("non-finite partial sum at N = {n}")));
    }
    let n_min = partials[0].0 as f64;
    let u: Vec<f64> = partials.iter().map(|(n, _)| n_min / *n as f64).collect();
    let y: Vec<f64> = partials.iter().map(|(_, f)| *f).collect();

    let quartic = design(&u, DEGREE);
    let singular = quartic
        .singular_values()
        .map_err(|_| Error::IllConditioned {
            condition: f64::INFINITY,
            reason: "singular value decomposition did not converge".into(),
        })?;
    let condition = singular[0] / singular[singular.len() - 1];
    if !(condition <= MAX_CONDITION) {
        return Err(Error::IllConditioned {
            condition,
            reason: "partial-sum indices are too clustered".into(),
        });
    }
    let coef4 = solve(&quartic, &y);
    let coef3 = solve(&design(&u, DEGREE - 1), &y);
    let coef2 = solve(&design(&u, DEGREE - 2), &y);
    let fit_rms = (u
        .iter()
        .zip(&y)
        .map(|(ui, yi)| {
            let r = yi - horner(&coef4, *ui);
            r * r
        })
        .sum::<f64>()
        / u.len() as f64)
        .sqrt();
    Ok(Extrapolation {
        limit: coef4[0],
        residual_estimate: (coef4[0] - coef3[0]).abs().max((coef3[0] - coef2[0]).abs()),
        fit_rms,
        condition,
    })
}

fn design(u: &[f64], degree: usize) -> Mat<f64> {
    Mat::from_fn(u.len(), degree + 1, |i, j| u[i].powi(j as i32))
}

fn solve(a: &Mat<f64>, y: &[f64]) -> Vec<f64> {
    let rhs = Mat::from_fn(y.len(), 1, |i, _| y[i]);
    let x = a.qr().solve_lstsq(&rhs);
    (0..a.ncols()).map(|j| x[(j, 0)]).collect()
}

fn horner(c: &[f64], u: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, ci| acc * u + ci)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Vec<usize> {
        (1..=6).map(|k| 1000 * k).collect()
    }

    #[test]
    fn exact_model_is_recovered() {
        let pts: Vec<_> = grid().into_iter().map(|n| (n, 7.0 + 3.0 / n as f64)).collect();
        let e = extrapolate_partial_sums(&pts).unwrap();
        assert!((e.limit - 7.0).abs() < 1e-9, "{}", e.limit);
        assert!(e.residual_estimate < 1e-9);
        let zeta_like: Vec<_> = grid().into_iter().map(|n| (n, 1.0 - 1.0 / n as f64 + 1.0 / (n * n) as f64)).collect();
        let e = extrapolate_partial_sums(&zeta_like).unwrap();
        assert!((e.limit - 1.0).abs() <= e.residual_estimate + 1e-12);
    }

    #[test]
    fn zeta_two_partial_sums() {
        let mut pts = Vec::new();
        let mut s = 0.0;
        let mut k = 0usize;
        for n in grid() {
            while k < n {
                k += 1;
                s += 1.0 / (k * k) as f64;
            }
            pts.push((n, s));
        }
        let e = extrapolate_partial_sums(&pts).unwrap();
        let zeta2 = std::f64::consts::PI.powi(2) / 6.0;
        assert!((e.limit - zeta2).abs() < 1e-6, "{}", e.limit - zeta2);
    }

    #[test]
    fn clustered_indices_are_ill_conditioned() {
        let pts: Vec<_> = (0..6).map(|k| (100_000 + k, 1.0)).collect();
        match extrapolate_partial_sums(&pts) {
            Err(Error::IllConditioned { condition, .. }) => assert!(condition > MAX_CONDITION),
            other => panic!("expected ill-conditioned, got {other:?}"),
        }
    }

    #[test]
    fn rejects_short_or_unsorted_input() {
        assert!(extrapolate_partial_sums(&[(1, 1.0); 5]).is_err());
        let pts: Vec<_> = [1, 2, 3, 5, 4, 6].iter().map(|n| (*n, 0.0)).collect();
        assert!(extrapolate_partial_sums(&pts).is_err());
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn polynomials_in_inverse_n_are_reproduced(
            c in proptest::collection::vec(-10.0f64..10.0, 5),
            base in 50usize..5000,
        ) {
            let pts: Vec<_> = (1..=6)
                .map(|k| {
                    let n = base * k;
                    let x = 1.0 / n as f64;
                    (n, c[0] + c[1] * x + c[2] * x * x + c[3] * x.powi(3) + c[4] * x.powi(4))
                })
                .collect();
            let e = extrapolate_partial_sums(&pts).unwrap();
            prop_assert!((e.limit - c[0]).abs() < 1e-8 * (1.0 + c[0].abs()));
        }
    }
}
