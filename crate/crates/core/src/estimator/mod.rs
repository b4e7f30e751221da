//! Estimation of Hawkes parameters from windowed observations.
//!
//! The gap-aware estimator minimises
//! `J(u, a, b, lbar) = mu sum |a| + sum_m sum_k [Lambda_mk - sum_i log lambda_mki]`
//! where each window `k` of entity `m` carries an unknown boundary intensity
//! `lbar_mk` standing in for the unobserved history before the window. The
//! gap-blind baseline treats the observed events as a complete record on
//! `(0, T]`.

mod fit;
mod mhp;
mod objective;
mod stats;
mod updates;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{BoundaryIntensities, ModelParams};

pub use fit::{default_mu, fit, fit_mhp, FitResult};
pub use mhp::mhp_objective;
pub use objective::{
    boundary_link, decay_terms, event_intensities, gradient_a, gradient_boundary, gradient_u, lasso_penalty, objective, DecayTerms,
    INTENSITY_FLOOR,
};
pub use stats::{precompute_stats, SufficientStats, WindowStats};
pub use updates::{follow_background, update_a, update_b, update_lambda, update_u, UpdateFlags, DECAY_MAX, DECAY_MIN};

/// Treatment of the boundary intensities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryMode {
    /// Every boundary intensity equals the background rate.
    FixedAtU,
    /// Free boundary intensities constrained to `[u, C u]`.
    Box(f64),
}

/// Starting point for a fit.
#[derive(Debug, Clone)]
pub struct InitialState {
    pub params: ModelParams,
    /// Defaults to the background rates when absent.
    pub bounds: Option<BoundaryIntensities>,
}

#[derive(Debug, Clone)]
pub struct FitConfig {
    /// LASSO weight; `None` selects [`default_mu`].
    pub mu: Option<f64>,
    pub boundary: BoundaryMode,
    /// Stop once the largest relative parameter change `|d theta| / (1 + |theta|)` falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// `None` starts from `u = 1`, `a = 0.5 / N`, `b = 1000`, `lbar = u`.
    pub init: Option<InitialState>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { mu: None, boundary: BoundaryMode::Box(20.0), tol: 1e-6, max_iter: 500, init: None }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(mu) = self.mu {
            if !(mu.is_finite() && mu >= 0.0) {
                return invalid(format!("mu = {mu} must be finite and >= 0"));
            }
        }
        if let BoundaryMode::Box(c) = self.boundary {
            if !(c.is_finite() && c >= 1.0) {
                return invalid(format!("box ratio C = {c} must be finite and >= 1"));
            }
        }
        if !(self.tol > 0.0) {
            return invalid(format!("tol = {} must be > 0", self.tol));
        }
        if self.max_iter == 0 {
            return invalid("max_iter must be positive");
        }
        Ok(())
    }
}

/// Starting parameters `u = 1`, `a = 0.5 / N`, `b = 1000`.
pub fn default_initial_params(n: usize) -> ModelParams {
    ModelParams::from_flat(vec![1.0; n], vec![0.5 / n as f64; n * n], vec![1000.0; n])
        .expect("default initial parameters are valid")
}

#[cfg(test)]
mod tests;
