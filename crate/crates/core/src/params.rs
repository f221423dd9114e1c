//! Physical parameters and result containers shared by every module.
//!
//! Units are dimensionless with the disk radius set to one. Angles are in
//! radians; the target is the arc of half-width `epsilon` centred at angle π.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the intermittent surface/bulk process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Ejection distance measured inward from the circle, `0 < a <= 1`.
    pub a: f64,
    /// Target half-width, `0 <= epsilon <= π`.
    pub epsilon: f64,
    /// Surface diffusion coefficient.
    pub d1: f64,
    /// Bulk diffusion coefficient.
    pub d2: f64,
    /// Desorption rate.
    pub lambda: f64,
}

impl ModelParams {
    /// Builds and validates a parameter set.
    pub fn new(a: f64, epsilon: f64, d1: f64, d2: f64, lambda: f64) -> Result<Self> {
        Self {
            a,
            epsilon,
            d1,
            d2,
            lambda,
        }
        .validate()
    }

    /// Returns `self` unchanged when every bound holds, otherwise the first
    /// violated bound.
    pub fn validate(self) -> Result<Self> {
        // `!(x > 0)` style comparisons also reject NaN.
        if !(self.a > 0.0 && self.a <= 1.0) {
            return Err(Error::Domain {
                name: "a",
                value: self.a,
                bound: "0 < a <= 1",
            });
        }
        if !(self.epsilon >= 0.0 && self.epsilon <= PI) {
            return Err(Error::Domain {
                name: "epsilon",
                value: self.epsilon,
                bound: "0 <= epsilon <= pi",
            });
        }
        if !(self.d1 > 0.0 && self.d1.is_finite()) {
            return Err(Error::Domain {
                name: "D1",
                value: self.d1,
                bound: "D1 > 0",
            });
        }
        if !(self.d2 > 0.0 && self.d2.is_finite()) {
            return Err(Error::Domain {
                name: "D2",
                value: self.d2,
                bound: "D2 > 0",
            });
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Domain {
                name: "lambda",
                value: self.lambda,
                bound: "lambda >= 0",
            });
        }
        Ok(self)
    }

    pub fn with_lambda(self, lambda: f64) -> Self {
        Self { lambda, ..self }
    }

    /// Length `π − ε` of the absorbing-free half arc.
    pub fn free_arc(&self) -> f64 {
        PI - self.epsilon
    }

    /// `1 − (1 − a)²`: four times `D2` times the mean bulk excursion duration.
    pub fn ejection_factor(&self) -> f64 {
        self.a * (2.0 - self.a)
    }

    pub fn is_point_target(&self) -> bool {
        self.epsilon == 0.0
    }

    /// The bracket prefactor `1 + λ(1 − (1 − a)²)/(4 D2)` at rate `lambda`.
    pub fn intermittency_factor(&self, lambda: f64) -> f64 {
        1.0 + lambda * self.ejection_factor() / (4.0 * self.d2)
    }

    pub(crate) fn require_extended_target(&self, what: &str) -> Result<()> {
        if self.epsilon > 0.0 {
            Ok(())
        } else {
            Err(Error::Unsupported(format!(
                "{what} requires an extended target (epsilon > 0)"
            )))
        }
    }
}

/// `1 − (1 − a)^n` evaluated without cancellation for small `a`.
pub(crate) fn one_minus_pow(a: f64, n: f64) -> f64 {
    if a >= 1.0 {
        1.0
    } else {
        -f64::exp_m1(n * f64::ln_1p(-a))
    }
}

/// A mean exit time with truncation diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetResult {
    pub value: f64,
    /// Number of series terms or eigenpairs that entered the value.
    pub truncation_n: usize,
    /// Whether the value is a partial-sum extrapolation.
    pub extrapolated: bool,
    /// Estimated absolute error from truncating the series.
    pub residual_estimate: f64,
    /// Set when `residual_estimate` exceeds the configured relative tolerance.
    pub truncation_warning: bool,
}

impl MetResult {
    pub(crate) fn exact(value: f64, truncation_n: usize) -> Self {
        Self {
            value,
            truncation_n,
            extrapolated: false,
            residual_estimate: 0.0,
            truncation_warning: false,
        }
    }

    pub(crate) fn flag(mut self, rel_tol: f64) -> Self {
        self.truncation_warning = self.residual_estimate > rel_tol * self.value.abs();
        self
    }
}

/// Mean exit time sampled along a grid of desorption rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetCurve {
    pub lambdas: Vec<f64>,
    pub values: Vec<f64>,
    pub residual_estimates: Vec<f64>,
    /// Large-rate limit of the curve (extended targets only).
    pub limit_t: Option<f64>,
    /// Coefficient of the `−λ^{-1/2}` approach to `limit_t`.
    pub c1: Option<f64>,
}

impl MetCurve {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    /// Index of the smallest value, if it lies strictly inside the grid.
    pub fn interior_minimum(&self) -> Option<usize> {
        let (idx, _) = self
            .values
            .iter()
            .enumerate()
            .min_by(|x, y| x.1.total_cmp(y.1))?;
        (idx > 0 && idx + 1 < self.values.len()).then_some(idx)
    }

    pub fn is_monotone_increasing(&self) -> bool {
        self.values.windows(2).all(|w| w[1] > w[0])
    }
}

/// Checks that a rate grid is non-empty, nonnegative and strictly increasing.
pub fn validate_grid(lambdas: &[f64]) -> Result<()> {
    if lambdas.is_empty() {
        return Err(Error::Unsupported("empty lambda grid".into()));
    }
    if let Some(&bad) = lambdas.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
        return Err(Error::Domain {
            name: "lambda",
            value: bad,
            bound: "lambda >= 0",
        });
    }
    if lambdas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Unsupported(
            "lambda grid must be strictly increasing".into(),
        ));
    }
    Ok(())
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn validation_is_idempotent(
            a in -0.5f64..1.5,
            e in -0.5f64..3.5,
            d1 in -1.0f64..2.0,
            d2 in -1.0f64..2.0,
            l in -1.0f64..10.0,
        ) {
            let p = ModelParams { a, epsilon: e, d1, d2, lambda: l };
            match p.validate() {
                Ok(q) => {
                    prop_assert_eq!(q, p);
                    prop_assert_eq!(q.validate(), Ok(q));
                    prop_assert!(q.a > 0.0 && q.a <= 1.0);
                    prop_assert!((0.0..=PI).contains(&q.epsilon));
                }
                Err(Error::Domain { name, .. }) => {
                    let violated = [
                        !(a > 0.0 && a <= 1.0),
                        !(0.0..=PI).contains(&e),
                        d1 <= 0.0,
                        d2 <= 0.0,
                        l < 0.0,
                    ];
                    let names = ["a", "epsilon", "D1", "D2", "lambda"];
                    let first = violated.iter().position(|v| *v).unwrap();
                    prop_assert_eq!(name, names[first]);
                }
                Err(other) => prop_assert!(false, "unexpected error {:?}", other),
            }
        }
    }
}
