//! Monte Carlo simulation of the intermittent surface/bulk process.
//!
//! Angles are measured from the point opposite the target centre, so the
//! free arc is `|θ| < π − ε`. Surface motion is tracked unwrapped; leaving
//! the free arc in either direction means hitting the target.

mod bulk;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bulk::{
    bulk_excursion_euler, bulk_excursion_exact, exit_offset_cdf, sample_exit_offset, wrap_angle,
};

use crate::error::{Error, Result};
use crate::params::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartPosition {
    Uniform,
    /// Fixed start angle in the usual orientation (target centred at π).
    Angle(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BulkMode {
    /// Exact exit-angle draw plus the conditional mean duration.
    ExactJump,
    /// Planar Brownian motion by Euler steps.
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: ModelParams,
    pub n_paths: usize,
    pub dt_surface: f64,
    pub seed: u64,
    pub start: StartPosition,
    pub bulk_mode: BulkMode,
    pub dt_bulk: f64,
    /// Brownian-bridge test for target hits between surface steps.
    pub bridge_correction: bool,
}

impl SimConfig {
    /// Uniform start, exact-jump bulk phase and default step sizes.
    pub fn new(params: ModelParams, n_paths: usize, seed: u64) -> Self {
        Self {
            params,
            n_paths,
            dt_surface: default_dt_surface(&params),
            seed,
            start: StartPosition::Uniform,
            bulk_mode: BulkMode::ExactJump,
            dt_bulk: default_dt_bulk(&params),
            bridge_correction: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.params.validate()?;
        if p.epsilon == 0.0 {
            return Err(Error::Unsupported(
                "simulation needs an extended target (epsilon > 0)".into(),
            ));
        }
        if self.n_paths == 0 {
            return Err(Error::Unsupported("n_paths must be at least 1".into()));
        }
        if !(self.dt_surface > 0.0 && self.dt_surface.is_finite()) {
            return Err(Error::Domain {
                name: "dt_surface",
                value: self.dt_surface,
                bound: "dt_surface > 0",
            });
        }
        if self.bulk_mode == BulkMode::Euler && !(self.dt_bulk > 0.0 && self.dt_bulk.is_finite()) {
            return Err(Error::Domain {
                name: "dt_bulk",
                value: self.dt_bulk,
                bound: "dt_bulk > 0",
            });
        }
        if let StartPosition::Angle(t) = self.start {
            if !t.is_finite() {
                return Err(Error::Domain {
                    name: "start",
                    value: t,
                    bound: "finite angle",
                });
            }
        }
        Ok(())
    }

    /// Whether a surface step can jump across the whole target arc.
    pub fn is_coarse(&self) -> bool {
        self.dt_surface * self.params.d1 > self.params.epsilon.powi(2)
    }
}

/// `min(10⁻³, ε², 10⁻³(π − ε)²)/D1`.
pub fn default_dt_surface(p: &ModelParams) -> f64 {
    let l = p.free_arc();
    1e-3f64.min(p.epsilon * p.epsilon).min(1e-3 * l * l).max(f64::MIN_POSITIVE) / p.d1
}

/// `min(10⁻⁴, 10⁻² a²)/D2`: steps small against the ejection depth.
pub fn default_dt_bulk(p: &ModelParams) -> f64 {
    1e-4f64.min(1e-2 * p.a * p.a) / p.d2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub config_echo: SimConfig,
}

/// Independent stream for path `index`, the same whatever the worker count.
fn path_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn simulate_path(cfg: &SimConfig, index: usize) -> f64 {
    let p = &cfg.params;
    let l = p.free_arc();
    let mut rng = path_rng(cfg.seed, index);
    let mut x = match cfg.start {
        StartPosition::Uniform => -PI + 2.0 * PI * rng.random::<f64>(),
        StartPosition::Angle(t) => wrap_angle(t),
    };
    if x.abs() >= l {
        return 0.0;
    }
    let desorption = (p.lambda > 0.0).then(|| Exp::new(p.lambda).expect("positive rate"));
    let sigma_coef = 2.0 * p.d1;
    let mut t = 0.0;
    loop {
        let mut remaining = desorption
            .as_ref()
            .map_or(f64::INFINITY, |e| e.sample(&mut rng));
        loop {
            let last = remaining <= cfg.dt_surface;
            let h = if last { remaining } else { cfg.dt_surface };
            let z: f64 = rng.sample(StandardNormal);
            let y = x + (sigma_coef * h).sqrt() * z;
            t += h;
            if y.abs() >= l {
                return t;
            }
            if cfg.bridge_correction {
                let hit = (-(l - x) * (l - y) / (p.d1 * h)).exp()
                    + (-(l + x) * (l + y) / (p.d1 * h)).exp();
                if rng.random::<f64>() < hit {
                    return t;
                }
            }
            x = y;
            if last {
                break;
            }
            remaining -= h;
        }
        let (angle, duration) = match cfg.bulk_mode {
            BulkMode::ExactJump => bulk_excursion_exact(x, p.a, p.d2, &mut rng),
            BulkMode::Euler => bulk_excursion_euler(x, p.a, p.d2, cfg.dt_bulk, &mut rng),
        };
        t += duration;
        x = angle;
        if x.abs() >= l {
            return t;
        }
    }
}

/// Pairwise summation in index order; the result depends only on the data.
fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

pub fn simulate_met(cfg: &SimConfig) -> Result<SimEstimate> {
    cfg.validate()?;
    let times: Vec<f64> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| simulate_path(cfg, i))
        .collect();
    let n = times.len() as f64;
    let mean = pairwise_sum(&times) / n;
    let stderr = if times.len() > 1 {
        let dev: Vec<f64> = times.iter().map(|t| (t - mean).powi(2)).collect();
        (pairwise_sum(&dev) / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    Ok(SimEstimate {
        mean,
        stderr,
        n_paths: cfg.n_paths,
        config_echo: *cfg,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub dt: f64,
    pub mean: f64,
    pub stderr: f64,
    /// `dt·D1 > ε²`.
    pub coarse: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub rows: Vec<ConvergenceRow>,
    /// Successive means differ by at most three combined standard errors.
    pub consistent: bool,
    /// Intercept of an inverse-variance weighted linear fit of mean vs `dt`.
    pub extrapolated_mean: f64,
    pub extrapolated_stderr: f64,
}

/// Reruns the simulation along a decreasing sequence of surface steps.
pub fn convergence_study(cfg: &SimConfig, dt_sequence: &[f64]) -> Result<ConvergenceStudy> {
    if dt_sequence.len() < 2 || dt_sequence.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Unsupported(
            "dt sequence must hold at least two strictly decreasing steps".into(),
        ));
    }
    let mut rows = Vec::with_capacity(dt_sequence.len());
    for &dt in dt_sequence {
        let run = SimConfig {
            dt_surface: dt,
            ..*cfg
        };
        let est = simulate_met(&run)?;
        if !est.mean.is_finite() {
            return Err(Error::Discretization(format!("non-finite mean at dt = {dt}")));
        }
        rows.push(ConvergenceRow {
            dt,
            mean: est.mean,
            stderr: est.stderr,
            coarse: run.is_coarse(),
        });
    }
    let gaps: Vec<(f64, f64)> = rows
        .windows(2)
        .map(|w| {
            let sigma = (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
            ((w[1].mean - w[0].mean).abs(), 3.0 * sigma)
        })
        .collect();
    let consistent = gaps.iter().all(|(d, tol)| d <= tol);
    // Refining the step should shrink the change; growth beyond noise means
    // the scheme is not converging.
    for k in 1..gaps.len() {
        let (d_prev, _) = gaps[k - 1];
        let (d, tol) = gaps[k];
        if d > tol && d > 2.0 * d_prev.max(tol) {
            return Err(Error::Discretization(format!(
                "mean moved by {d:e} when refining to dt = {}",
                rows[k + 1].dt
            )));
        }
    }
    let (intercept, intercept_se) = weighted_intercept(&rows);
    Ok(ConvergenceStudy {
        rows,
        consistent,
        extrapolated_mean: intercept,
        extrapolated_stderr: intercept_se,
    })
}

fn weighted_intercept(rows: &[ConvergenceRow]) -> (f64, f64) {
    let w: Vec<f64> = rows
        .iter()
        .map(|r| 1.0 / r.stderr.max(f64::MIN_POSITIVE).powi(2))
        .collect();
    let sw: f64 = w.iter().sum();
    let sx: f64 = rows.iter().zip(&w).map(|(r, w)| w * r.dt).sum();
    let sy: f64 = rows.iter().zip(&w).map(|(r, w)| w * r.mean).sum();
    let sxx: f64 = rows.iter().zip(&w).map(|(r, w)| w * r.dt * r.dt).sum();
    let sxy: f64 = rows.iter().zip(&w).map(|(r, w)| w * r.dt * r.mean).sum();
    let det = sw * sxx - sx * sx;
    let intercept = (sxx * sy - sx * sxy) / det;
    (intercept, (sxx / det).sqrt())
}
