//! Mean exit time of surface-mediated diffusion from the unit disk.
//!
//! A particle diffuses along the circle with coefficient `D1`, leaves it at
//! rate `λ`, restarts bulk diffusion (coefficient `D2`) at depth `a`, and
//! returns to the circle; it is absorbed by an arc of half-width `ε`. The
//! mean exit time is computed from the spectrum of `V T̃ V` in the cosine
//! basis and checked against closed forms and a Monte Carlo simulation.

pub mod asymptotics;
pub mod closed_form;
pub mod error;
pub mod extrapolate;
pub mod montecarlo;
pub mod operator;
pub mod params;
pub mod spectral;

pub use error::{Error, Result};
pub use operator::{assemble_vtv, assemble_vtv_with, psi_projection, OperatorMatrix, PsiProjection};
pub use params::{validate_grid, MetCurve, MetResult, ModelParams};
pub use spectral::{decompose, decompose_with, met, met_curve, met_limit, SpectralData};
