use serde::Serialize;

use crate::error::{invalid, HawkesError, Result};
use crate::model::{BoundaryIntensities, EventData, ModelParams, WindowSet};


use super::objective::objective_floored;
use super::stats::precompute_stats;
use super::updates::{follow_background, update_a, update_b, update_lambda, update_u, UpdateFlags};
use super::{default_initial_params, BoundaryMode, FitConfig};

/// Consecutive objective increases tolerated before a fit is abandoned.
const MAX_CONSECUTIVE_ASCENTS: usize = 50;

#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub params: ModelParams,
    pub bounds: BoundaryIntensities,
    /// Objective at the starting point followed by one value per iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub mu: f64,
    pub flags: UpdateFlags,
    /// Iterations whose objective rose by more than `1e-8 (1 + |J|)`.
    pub ascent_steps: usize,
}

impl FitResult {
    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace holds the initial objective")
    }
}

/// `0.01 * (observed event count) / N^2`.
pub fn default_mu(observed: &EventData) -> f64 {
    let n = observed.n() as f64;
    0.01 * observed.total_count() as f64 / (n * n)
}

fn max_relative_change(old: &[f64], new: &[f64]) -> f64 {
    old.iter()
        .zip(new)
        .map(|(o, n)| (n - o).abs() / (1.0 + o.abs()))
        .fold(0.0, f64::max)
}

/// Minimises the gapped objective by cycling the `u`, `a`, `b` and boundary
/// updates, each using the freshest values of the blocks before it.
pub fn fit(observed: &EventData, windows: &WindowSet, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    let n = observed.n();
    let mu = config.mu.unwrap_or_else(|| default_mu(observed));
    let mode = config.boundary;

    let (mut params, bounds) = match &config.init {
        Some(init) => (init.params.clone(), init.bounds.clone()),
        None => (default_initial_params(n), None),
    };
    if params.n() != n {
        return invalid(format!("initial parameters have {} entities, data has {n}", params.n()));
    }
    let mut bounds = match (bounds, mode) {
        (Some(b), BoundaryMode::Box(ratio)) => {
            let checked = BoundaryIntensities::new(windows, b.values().to_vec())?;
            let clamped = checked
                .values()
                .iter()
                .zip(params.u())
                .map(|(row, &u)| row.iter().map(|v| v.clamp(u, ratio * u)).collect())
                .collect();
            BoundaryIntensities::from_raw(clamped)
        }
        _ => BoundaryIntensities::at_background(&params, windows),
    };

    let mut stats = precompute_stats(observed, windows, params.b())?;
    let mut flags = UpdateFlags::default();
    let (j0, hits) = objective_floored(&params, &bounds, &stats, mu);
    flags.floored_intensities += hits;
    let mut trace = vec![j0];
    let mut converged = false;
    let mut iterations = 0;
    let mut ascent_steps = 0;
    let mut ascent_run = 0;

    while iterations < config.max_iter {
        iterations += 1;
        let mut change: f64 = 0.0;

        let u = update_u(&params, &bounds, &stats, mode, &mut flags)?;
        change = change.max(max_relative_change(params.u(), &u));
        let old_u = params.u().to_vec();
        params.set_u(u);
        bounds = follow_background(&bounds, &old_u, &params, mode);

        let a = update_a(&params, &bounds, &stats, mu, &mut flags)?;
        change = change.max(max_relative_change(params.a_flat(), &a));
        params.set_a(a);

        let b = update_b(&params, &bounds, &stats, &mut flags)?;
        change = change.max(max_relative_change(params.b(), &b));
        if b != params.b() {
            stats.refresh(observed, windows, &b)?;
            params.set_b(b);
        }

        let next_bounds = update_lambda(&params, &bounds, &stats, mode, &mut flags)?;
        for (old, new) in bounds.values().iter().zip(next_bounds.values()) {
            change = change.max(max_relative_change(old, new));
        }
        bounds = next_bounds;

        let (j, hits) = objective_floored(&params, &bounds, &stats, mu);
        flags.floored_intensities += hits;
        if !j.is_finite() {
            return Err(HawkesError::Numerical(format!(
                "objective became {j} at iteration {iterations}: u = {:?}, a = {:?}, b = {:?}",
                params.u(),
                params.a_flat(),
                params.b()
            )));
        }
        let prev = *trace.last().expect("trace is never empty");
        if j > prev + 1e-8 * (1.0 + prev.abs()) {
            ascent_steps += 1;
            ascent_run += 1;
            log::debug!("iteration {iterations}: objective rose from {prev} to {j}");
            if ascent_run >= MAX_CONSECUTIVE_ASCENTS {
                return Err(HawkesError::Numerical(format!(
                    "objective increased for {ascent_run} consecutive iterations (last {prev} -> {j})"
                )));
            }
        } else {
            ascent_run = 0;
        }
        trace.push(j);

        if change < config.tol {
            converged = true;
            break;
        }
    }

    Ok(FitResult { params, bounds, objective_trace: trace, iterations, converged, mu, flags, ascent_steps })
}

/// Gap-blind baseline: the observed events are taken as the complete record
/// on `(0, horizon]` and every boundary is pinned to the background rate.
pub fn fit_mhp(observed_as_complete: &EventData, horizon: f64, config: &FitConfig) -> Result<FitResult> {
    let events = EventData::new(horizon, observed_as_complete.all_times().to_vec())?;
    let windows = WindowSet::full(events.n(), horizon)?;
    let config = FitConfig { boundary: BoundaryMode::FixedAtU, ..config.clone() };
    fit(&events, &windows, &config)
}
