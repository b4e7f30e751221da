//! Gapped penalised negative log-likelihood and its partial derivatives.

use crate::error::{invalid, HawkesError, Result};
use crate::model::{BoundaryIntensities, ModelParams};

use super::stats::{SufficientStats, WindowStats};
use super::BoundaryMode;

/// Lower bound applied to per-event intensities before taking logarithms
/// inside the fitting loop.
pub const INTENSITY_FLOOR: f64 = 1e-12;

pub(crate) fn check_compatible(params: &ModelParams, bounds: &BoundaryIntensities, stats: &SufficientStats) -> Result<()> {
    let n = params.n();
    if stats.n() != n || bounds.values().len() != n {
        return invalid("parameters, boundary intensities and statistics disagree on the entity count");
    }
    if stats.decay() != params.b() {
        return invalid("statistics were computed for a different decay vector");
    }
    for m in 0..n {
        if bounds.entity(m).len() != stats.entity(m).len() {
            return invalid(format!("entity {m}: boundary intensities do not match the window count"));
        }
    }
    Ok(())
}

/// Gapped intensity at the `i`-th observed event of window `ws` of entity `m`.
#[inline]
pub(crate) fn event_intensity(params: &ModelParams, m: usize, boundary: f64, ws: &WindowStats, i: usize) -> f64 {
    let n = params.n();
    let u = params.u()[m];
    let excitation: f64 = params
        .a_row(m)
        .iter()
        .zip(&ws.kernel[i * n..(i + 1) * n])
        .map(|(a, k)| a * k)
        .sum();
    u + (boundary - u) * ws.boundary_decay[i] + excitation
}

/// Closed-form integral of the gapped intensity of entity `m` over window `ws`.
#[inline]
pub(crate) fn window_integral(params: &ModelParams, m: usize, boundary: f64, ws: &WindowStats) -> f64 {
    let u = params.u()[m];
    let b = params.b()[m];
    let excitation: f64 = params.a_row(m).iter().zip(&ws.mass).map(|(a, s)| a * s).sum();
    u * ws.window.len() + (boundary - u) * ws.window_decay_complement / b + excitation
}

/// Per-event gapped intensities `[entity][window][event]`.
pub fn event_intensities(
    params: &ModelParams,
    bounds: &BoundaryIntensities,
    stats: &SufficientStats,
) -> Result<Vec<Vec<Vec<f64>>>> {
    check_compatible(params, bounds, stats)?;
    Ok((0..params.n())
        .map(|m| {
            stats
                .entity(m)
                .iter()
                .enumerate()
                .map(|(k, ws)| {
                    (0..ws.event_count())
                        .map(|i| event_intensity(params, m, bounds.get(m, k), ws, i))
                        .collect()
                })
                .collect()
        })
        .collect())
}

pub fn lasso_penalty(params: &ModelParams, mu: f64) -> f64 {
    mu * params.a_flat().iter().map(|a| a.abs()).sum::<f64>()
}

/// `J = mu * sum |a| + sum_m sum_k [Lambda_mk - sum_i log lambda_mki]`.
///
/// Fails with the offending `(entity, window, event)` when an intensity at an
/// observed event is not strictly positive.
pub fn objective(params: &ModelParams, bounds: &BoundaryIntensities, stats: &SufficientStats, mu: f64) -> Result<f64> {
    check_compatible(params, bounds, stats)?;
    let mut total = lasso_penalty(params, mu);
    for m in 0..params.n() {
        for (k, ws) in stats.entity(m).iter().enumerate() {
            let boundary = bounds.get(m, k);
            total += window_integral(params, m, boundary, ws);
            for i in 0..ws.event_count() {
                let lambda = event_intensity(params, m, boundary, ws, i);
                if !(lambda > 0.0 && lambda.is_finite()) {
                    return Err(HawkesError::NonPositiveIntensity { entity: m, window: k, event: i, value: lambda });
                }
                total -= lambda.ln();
            }
        }
    }
    Ok(total)
}

/// Objective with intensities floored at [`INTENSITY_FLOOR`]; also returns
/// how many events hit the floor.
pub(crate) fn objective_floored(
    params: &ModelParams,
    bounds: &BoundaryIntensities,
    stats: &SufficientStats,
    mu: f64,
) -> (f64, usize) {
    let mut total = lasso_penalty(params, mu);
    let mut floored = 0;
    for m in 0..params.n() {
        for (k, ws) in stats.entity(m).iter().enumerate() {
            let boundary = bounds.get(m, k);
            total += window_integral(params, m, boundary, ws);
            for i in 0..ws.event_count() {
                let lambda = event_intensity(params, m, boundary, ws, i);
                if !(lambda > INTENSITY_FLOOR) {
                    floored += 1;
                }
                total -= lambda.max(INTENSITY_FLOOR).ln();
            }
        }
    }
    (total, floored)
}

/// Multiple of `u_m` that the boundary of a window is tied to, if any.
///
/// Pinned boundaries equal `u_m`. In box mode a boundary sitting on either
/// end of `[u_m, C u_m]` moves with `u_m`; an interior one is free.
pub fn boundary_link(mode: BoundaryMode, u: f64, boundary: f64) -> Option<f64> {
    match mode {
        BoundaryMode::FixedAtU => Some(1.0),
        BoundaryMode::Box(ratio) => {
            let tol = 1e-12 * u.abs().max(f64::MIN_POSITIVE);
            if (boundary - u).abs() <= tol {
                Some(1.0)
            } else if (boundary - ratio * u).abs() <= tol * ratio {
                Some(ratio)
            } else {
                None
            }
        }
    }
}

/// `(dLambda/du, [dlambda_i/du])` weights for one window: the event weights
/// are `1 + (k - 1) e_i` for a boundary tied to `k u` and `1 - e_i` for a
/// free one.
#[inline]
pub(crate) fn background_weights(link: Option<f64>, b: f64, ws: &WindowStats) -> (f64, impl Iterator<Item = f64> + '_) {
    let (scale, offset) = match link {
        Some(k) => (k - 1.0, 1.0),
        None => (-1.0, 1.0),
    };
    let integral = ws.window.len() + scale * ws.window_decay_complement / b;
    (integral, ws.boundary_decay.iter().map(move |e| offset + scale * e))
}

/// `dJ/du_m`, with boundaries tied to `u_m` as described by [`boundary_link`]
/// differentiated along with it and free boundaries held fixed.
pub fn gradient_u(
    params: &ModelParams,
    bounds: &BoundaryIntensities,
    stats: &SufficientStats,
    mode: BoundaryMode,
) -> Result<Vec<f64>> {
    check_compatible(params, bounds, stats)?;
    Ok((0..params.n())
        .map(|m| {
            let u = params.u()[m];
            let b = params.b()[m];
            let mut g = 0.0;
            for (k, ws) in stats.entity(m).iter().enumerate() {
                let boundary = bounds.get(m, k);
                let (integral, weights) = background_weights(boundary_link(mode, u, boundary), b, ws);
                g += integral;
                for (i, w) in weights.enumerate() {
                    g -= w / event_intensity(params, m, boundary, ws, i);
                }
            }
            g
        })
        .collect())
}

/// `dL/da_{m,n}` (smooth part, without the LASSO term), row-major.
pub fn gradient_a(params: &ModelParams, bounds: &BoundaryIntensities, stats: &SufficientStats) -> Result<Vec<f64>> {
    check_compatible(params, bounds, stats)?;
    let n = params.n();
    let mut g = vec![0.0; n * n];
    for m in 0..n {
        let row = &mut g[m * n..(m + 1) * n];
        for (k, ws) in stats.entity(m).iter().enumerate() {
            for (gs, mass) in row.iter_mut().zip(&ws.mass) {
                *gs += mass;
            }
            for i in 0..ws.event_count() {
                let lambda = event_intensity(params, m, bounds.get(m, k), ws, i);
                for (gs, kern) in row.iter_mut().zip(&ws.kernel[i * n..(i + 1) * n]) {
                    *gs -= kern / lambda;
                }
            }
        }
    }
    Ok(g)
}

/// `dJ/d lambda_bar_{m,k}`.
pub fn gradient_boundary(params: &ModelParams, bounds: &BoundaryIntensities, stats: &SufficientStats) -> Result<Vec<Vec<f64>>> {
    check_compatible(params, bounds, stats)?;
    Ok((0..params.n())
        .map(|m| {
            let b = params.b()[m];
            stats
                .entity(m)
                .iter()
                .enumerate()
                .map(|(k, ws)| {
                    let boundary = bounds.get(m, k);
                    let mut g = ws.window_decay_complement / b;
                    for i in 0..ws.event_count() {
                        g -= ws.boundary_decay[i] / event_intensity(params, m, boundary, ws, i);
                    }
                    g
                })
                .collect()
        })
        .collect())
}

/// Pieces of `dJ/db_m = integral - log + b_m * lag`.
///
/// * `integral`: derivative of the window integrals.
/// * `log`: per-event part from the boundary term and the unscaled kernel sums.
/// * `lag`: per-event part from the lag-weighted kernel sums; nonnegative.
///
/// Stationarity in `b_m` gives the fixed point `b_m = (log - integral) / lag`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayTerms {
    pub integral: f64,
    pub log: f64,
    pub lag: f64,
}

impl DecayTerms {
    pub fn derivative(&self, b: f64) -> f64 {
        self.integral - self.log + b * self.lag
    }
}

pub fn decay_terms(params: &ModelParams, bounds: &BoundaryIntensities, stats: &SufficientStats) -> Result<Vec<DecayTerms>> {
    check_compatible(params, bounds, stats)?;
    Ok((0..params.n()).map(|m| decay_terms_for(params, bounds, stats, m)).collect())
}

pub(crate) fn decay_terms_for(params: &ModelParams, bounds: &BoundaryIntensities, stats: &SufficientStats, m: usize) -> DecayTerms {
    let n = params.n();
    let u = params.u()[m];
    let b = params.b()[m];
    let row = params.a_row(m);
    let mut terms = DecayTerms { integral: 0.0, log: 0.0, lag: 0.0 };
    for (k, ws) in stats.entity(m).iter().enumerate() {
        let boundary = bounds.get(m, k);
        let excess = boundary - u;
        let len = ws.window.len();
        terms.integral += excess * (-ws.window_decay_complement / (b * b) + len * ws.window_decay / b);
        terms.integral += row.iter().zip(&ws.mass_lag).map(|(a, s)| a * s).sum::<f64>();
        for i in 0..ws.event_count() {
            let lambda = event_intensity(params, m, boundary, ws, i).max(INTENSITY_FLOOR);
            let since_start = ws.times[i] - ws.window.start;
            let unscaled: f64 = row.iter().zip(&ws.kernel_unscaled[i * n..(i + 1) * n]).map(|(a, s)| a * s).sum();
            let lagged: f64 = row.iter().zip(&ws.kernel_lag[i * n..(i + 1) * n]).map(|(a, s)| a * s).sum();
            terms.log += (-excess * since_start * ws.boundary_decay[i] + unscaled) / lambda;
            terms.lag += lagged / lambda;
        }
    }
    terms
}
