//! Full-record objective of the gap-blind baseline, evaluated by a single
//! chronological sweep over all events.

use crate::error::{invalid, HawkesError, Result};
use crate::model::{EventData, ModelParams};

/// `mu sum |a| + sum_m [int_0^T lambda_m - sum_i log lambda_m(t_mi)]` with
/// `lambda_m(0) = u_m`, treating `events` as complete.
pub fn mhp_objective(params: &ModelParams, events: &EventData, mu: f64) -> Result<f64> {
    let n = params.n();
    if events.n() != n {
        return invalid(format!("parameters describe {n} entities but data has {}", events.n()));
    }
    let horizon = events.horizon();
    let u = params.u();
    let b = params.b();

    let mut merged: Vec<(f64, usize)> = events
        .all_times()
        .iter()
        .enumerate()
        .flat_map(|(m, ts)| ts.iter().map(move |&t| (t, m)))
        .collect();
    merged.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));

    // lambda_m - u_m just after the last processed event
    let mut excess = vec![0.0; n];
    let mut clock = 0.0;
    let mut log_sum = 0.0;
    let mut start = 0;
    while start < merged.len() {
        let t = merged[start].0;
        let end = start + merged[start..].iter().take_while(|e| e.0 == t).count();
        for (x, bm) in excess.iter_mut().zip(b) {
            *x *= (-bm * (t - clock)).exp();
        }
        clock = t;
        for &(_, m) in &merged[start..end] {
            let lambda = u[m] + excess[m];
            if !(lambda > 0.0) {
                return Err(HawkesError::NonPositiveIntensity { entity: m, window: 0, event: start, value: lambda });
            }
            log_sum += lambda.ln();
        }
        for &(_, src) in &merged[start..end] {
            for (m, x) in excess.iter_mut().enumerate() {
                *x += params.a(m, src) * b[m];
            }
        }
        start = end;
    }

    let mut compensator = 0.0;
    for m in 0..n {
        compensator += u[m] * horizon;
        for (src, ts) in events.all_times().iter().enumerate() {
            let mass: f64 = ts.iter().map(|&s| 1.0 - (-b[m] * (horizon - s)).exp()).sum();
            compensator += params.a(m, src) * mass;
        }
    }
    let penalty = mu * params.a_flat().iter().map(|a| a.abs()).sum::<f64>();
    Ok(penalty + compensator - log_sum)
}
