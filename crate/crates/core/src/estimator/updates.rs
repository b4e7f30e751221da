//! Fixed-point updates for each parameter block.
//!
//! Every update sets its block to the value that makes the block's
//! stationarity equation hold with the per-event intensities frozen at the
//! current iterate.

use crate::error::{HawkesError, Result};
use crate::model::{BoundaryIntensities, ModelParams};

use super::objective::{background_weights, boundary_link, check_compatible, decay_terms_for, event_intensity, INTENSITY_FLOOR};
use super::stats::SufficientStats;
use super::BoundaryMode;

pub const DECAY_MIN: f64 = 1e-6;
pub const DECAY_MAX: f64 = 1e6;

/// Counters raised by the guarded parts of the updates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct UpdateFlags {
    /// Per-event intensities that fell to the positivity floor.
    pub floored_intensities: usize,
    /// Decay updates skipped because the lag term was not positive.
    pub stalled_decay_updates: usize,
}

fn floored(lambda: f64, flags: &mut UpdateFlags) -> f64 {
    if lambda > INTENSITY_FLOOR {
        lambda
    } else {
        flags.floored_intensities += 1;
        INTENSITY_FLOOR
    }
}

/// Background rates.
///
/// Each event contributes its background share `u w_i / lambda_i`,
/// normalised by the window integrals' `u`-derivative, where the weights `w`
/// come from [`background_weights`]: boundaries tied to `u` (pinned, or on a
/// box bound) move with it, free ones stay put.
pub fn update_u(
    params: &ModelParams,
    bounds: &BoundaryIntensities,
    stats: &SufficientStats,
    mode: BoundaryMode,
    flags: &mut UpdateFlags,
) -> Result<Vec<f64>> {
    check_compatible(params, bounds, stats)?;
    (0..params.n())
        .map(|m| {
            let u = params.u()[m];
            let b = params.b()[m];
            let mut num = 0.0;
            let mut den = 0.0;
            for (k, ws) in stats.entity(m).iter().enumerate() {
                let boundary = bounds.get(m, k);
                let (integral, weights) = background_weights(boundary_link(mode, u, boundary), b, ws);
                den += integral;
                for (i, w) in weights.enumerate() {
                    let lambda = floored(event_intensity(params, m, boundary, ws, i), flags);
                    num += u * w / lambda;
                }
            }
            if den > 0.0 {
                Ok(num / den)
            } else {
                Err(HawkesError::Numerical(format!(
                    "entity {m}: background update has a zero denominator (no usable windows)"
                )))
            }
        })
        .collect()
}

/// Moves every boundary tied to `u` (see [`boundary_link`]) from `old_u` to
/// `params.u()`, leaving free boundaries unchanged.
pub fn follow_background(
    bounds: &BoundaryIntensities,
    old_u: &[f64],
    params: &ModelParams,
    mode: BoundaryMode,
) -> BoundaryIntensities {
    let values = bounds
        .values()
        .iter()
        .enumerate()
        .map(|(m, row)| {
            row.iter()
                .map(|&v| match boundary_link(mode, old_u[m], v) {
                    Some(k) => k * params.u()[m],
                    None => v,
                })
                .collect()
        })
        .collect();
    BoundaryIntensities::from_raw(values)
}

/// Excitation matrix, row-major.
///
/// Positive entries take the majorise-minimise step for the penalised
/// objective, `a = sum_k sum_i a A / lambda / (sum_k B + mu)`, which reduces
/// to the plain multiplicative update at `mu = 0`. An entry is set to exactly
/// zero when zero satisfies its optimality condition along that coordinate,
/// `sum A / lambda_0 - sum B <= mu` with `lambda_0 = lambda - a A` the
/// intensity without the entry. Since the objective is convex along each
/// entry, zero is then the coordinate minimiser. A zero entry that fails the
/// condition re-enters with one Newton step from zero.
pub fn update_a(
    params: &ModelParams,
    bounds: &BoundaryIntensities,
    stats: &SufficientStats,
    mu: f64,
    flags: &mut UpdateFlags,
) -> Result<Vec<f64>> {
    check_compatible(params, bounds, stats)?;
    let n = params.n();
    let mut out = vec![0.0; n * n];
    for m in 0..n {
        let row = params.a_row(m);
        let mut responsibility = vec![0.0; n];
        let mut pull_at_zero = vec![0.0; n];
        let mut curvature_at_zero = vec![0.0; n];
        let mut mass = vec![0.0; n];
        for (k, ws) in stats.entity(m).iter().enumerate() {
            for (acc, s) in mass.iter_mut().zip(&ws.mass) {
                *acc += s;
            }
            for i in 0..ws.event_count() {
                let lambda = floored(event_intensity(params, m, bounds.get(m, k), ws, i), flags);
                for (j, kern) in ws.kernel[i * n..(i + 1) * n].iter().enumerate() {
                    responsibility[j] += row[j] * kern / lambda;
                    let ratio = kern / (lambda - row[j] * kern).max(INTENSITY_FLOOR);
                    pull_at_zero[j] += ratio;
                    curvature_at_zero[j] += ratio * ratio;
                }
            }
        }
        for j in 0..n {
            let slope_at_zero = pull_at_zero[j] - mass[j];
            out[m * n + j] = if mass[j] <= 0.0 || slope_at_zero <= mu {
                0.0
            } else if row[j] > 0.0 {
                responsibility[j] / (mass[j] + mu)
            } else {
                (slope_at_zero - mu) / curvature_at_zero[j]
            };
        }
    }
    Ok(out)
}

/// Decay rates from `b = (log - integral) / lag`, clamped to
/// `[DECAY_MIN, DECAY_MAX]`. Entities whose lag term is not positive keep
/// their current rate.
pub fn update_b(
    params: &ModelParams,
    bounds: &BoundaryIntensities,
    stats: &SufficientStats,
    flags: &mut UpdateFlags,
) -> Result<Vec<f64>> {
    check_compatible(params, bounds, stats)?;
    Ok((0..params.n())
        .map(|m| {
            let terms = decay_terms_for(params, bounds, stats, m);
            let proposal = (terms.log - terms.integral) / terms.lag;
            if terms.lag > 0.0 && proposal.is_finite() {
                proposal.clamp(DECAY_MIN, DECAY_MAX)
            } else {
                flags.stalled_decay_updates += 1;
                params.b()[m]
            }
        })
        .collect())
}

/// Boundary intensities. Pinned mode copies `u`; box mode takes one Picard
/// step of `lbar = b sum_i lbar e_i / lambda_i / (1 - exp(-b (d - c)))`
/// and clamps to `[u, C u]`.
pub fn update_lambda(
    params: &ModelParams,
    bounds: &BoundaryIntensities,
    stats: &SufficientStats,
    mode: BoundaryMode,
    flags: &mut UpdateFlags,
) -> Result<BoundaryIntensities> {
    check_compatible(params, bounds, stats)?;
    let values = (0..params.n())
        .map(|m| {
            let u = params.u()[m];
            let b = params.b()[m];
            stats
                .entity(m)
                .iter()
                .enumerate()
                .map(|(k, ws)| match mode {
                    BoundaryMode::FixedAtU => u,
                    BoundaryMode::Box(ratio) => {
                        let boundary = bounds.get(m, k);
                        let mut num = 0.0;
                        for i in 0..ws.event_count() {
                            let lambda = floored(event_intensity(params, m, boundary, ws, i), flags);
                            num += boundary * ws.boundary_decay[i] / lambda;
                        }
                        let proposal = b * num / ws.window_decay_complement;
                        if proposal.is_finite() {
                            proposal.clamp(u, ratio * u)
                        } else {
                            u
                        }
                    }
                })
                .collect()
        })
        .collect();
    Ok(BoundaryIntensities::from_raw(values))
}
