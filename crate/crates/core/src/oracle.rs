//! Reference implementations for validating the fast paths: midpoint
//! quadrature of the gapped intensity, kernel sums by direct double
//! summation, central finite differences and the Poisson closed form.
//!
//! These are quadratic or worse and meant for small inputs only.

use crate::error::{invalid, HawkesError, Result};
use crate::estimator::{SufficientStats, WindowStats};
use crate::model::{cif_gapped, BoundaryIntensities, EventData, ModelParams, Window, WindowSet};

/// Largest number of (target, source) pairs the brute-force oracle will visit.
pub const MAX_PAIR_EVALUATIONS: usize = 10_000_000;

/// Composite midpoint rule with step at most `dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub dt: f64,
}

/// Integral of the gapped intensity of entity `m` over its window `k`.
///
/// The window is split at every observed event time, where the integrand
/// jumps, and each piece gets its own midpoint grid, so the error is
/// `O(dt^2)`. Requires `dt <= (d - c) / 100`.
pub fn quad_integrated_cif(
    params: &ModelParams,
    observed: &EventData,
    windows: &WindowSet,
    bounds: &BoundaryIntensities,
    m: usize,
    k: usize,
    spec: QuadratureSpec,
) -> Result<f64> {
    let Some(&Window { start: c, end: d }) = windows.windows(m).get(k) else {
        return invalid(format!("window index {k} out of range for entity {m}"));
    };
    if !(spec.dt > 0.0 && spec.dt <= (d - c) / 100.0) {
        return invalid(format!("quadrature step {} must be in (0, {}]", spec.dt, (d - c) / 100.0));
    }
    let mut cuts: Vec<f64> = observed
        .all_times()
        .iter()
        .flatten()
        .copied()
        .filter(|&t| t > c && t < d)
        .collect();
    cuts.push(c);
    cuts.push(d);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let mut total = 0.0;
    for piece in cuts.windows(2) {
        let (lo, hi) = (piece[0], piece[1]);
        let steps = ((hi - lo) / spec.dt).ceil().max(1.0) as usize;
        let h = (hi - lo) / steps as f64;
        let mut acc = 0.0;
        for j in 0..steps {
            let t = lo + (j as f64 + 0.5) * h;
            acc += cif_gapped(params, observed, windows, bounds, m, t)?;
        }
        total += acc * h;
    }
    Ok(total)
}

fn inside(w: &Window, t: f64) -> bool {
    w.start < t && t <= w.end
}

/// Kernel sums evaluated straight from their definitions as double sums.
pub fn brute_force_stats(observed: &EventData, windows: &WindowSet, decay: &[f64]) -> Result<SufficientStats> {
    let n = observed.n();
    if windows.n() != n || decay.len() != n {
        return invalid("events, windows and decay vector disagree on the number of entities");
    }
    if decay.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
        return invalid("decay rates must be finite and > 0");
    }
    let total_events = observed.total_count();
    let mut pairs = 0usize;
    for m in 0..n {
        for w in windows.windows(m) {
            let targets = observed.times(m).iter().filter(|&&t| inside(w, t)).count();
            pairs = pairs.saturating_add(targets.saturating_mul(total_events));
        }
    }
    if pairs > MAX_PAIR_EVALUATIONS {
        return invalid(format!("{pairs} kernel pairs exceed the oracle limit of {MAX_PAIR_EVALUATIONS}"));
    }

    let entities = (0..n)
        .map(|m| {
            let b = decay[m];
            windows
                .windows(m)
                .iter()
                .map(|w| {
                    let times: Vec<f64> = observed.times(m).iter().copied().filter(|&t| inside(w, t)).collect();
                    let mut kernel = vec![0.0; times.len() * n];
                    let mut kernel_unscaled = vec![0.0; times.len() * n];
                    let mut kernel_lag = vec![0.0; times.len() * n];
                    for (i, &t) in times.iter().enumerate() {
                        for src in 0..n {
                            for &s in observed.times(src) {
                                if s > w.start && s < t {
                                    let e = (-b * (t - s)).exp();
                                    kernel[i * n + src] += b * e;
                                    kernel_unscaled[i * n + src] += e;
                                    kernel_lag[i * n + src] += (t - s) * e;
                                }
                            }
                        }
                    }
                    let mut mass = vec![0.0; n];
                    let mut mass_lag = vec![0.0; n];
                    for src in 0..n {
                        for &s in observed.times(src).iter().filter(|&&s| inside(w, s)) {
                            mass[src] += 1.0 - (-b * (w.end - s)).exp();
                            mass_lag[src] += (w.end - s) * (-b * (w.end - s)).exp();
                        }
                    }
                    let window_decay = (-b * w.len()).exp();
                    WindowStats {
                        window: *w,
                        boundary_decay: times.iter().map(|&t| (-b * (t - w.start)).exp()).collect(),
                        times,
                        window_decay,
                        window_decay_complement: 1.0 - window_decay,
                        kernel,
                        kernel_unscaled,
                        kernel_lag,
                        mass,
                        mass_lag,
                    }
                })
                .collect()
        })
        .collect();
    Ok(SufficientStats::from_parts(n, decay.to_vec(), entities))
}

/// Central difference `(f(x + h e_i) - f(x - h e_i)) / (2h)`.
pub fn fd_gradient<F>(f: F, point: &[f64], coord: usize, h: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if !(h > 0.0 && h.is_finite()) {
        return invalid(format!("step h = {h} must be finite and > 0"));
    }
    if coord >= point.len() {
        return invalid(format!("coordinate {coord} out of range for a point of length {}", point.len()));
    }
    let mut probe = point.to_vec();
    probe[coord] = point[coord] + h;
    let up = f(&probe)?;
    probe[coord] = point[coord] - h;
    let down = f(&probe)?;
    if !(up.is_finite() && down.is_finite()) {
        return Err(HawkesError::Numerical(format!("objective not finite at probe points ({up}, {down})")));
    }
    Ok((up - down) / (2.0 * h))
}

/// Per-entity observed count divided by total observed time.
pub fn poisson_mle(observed: &EventData, windows: &WindowSet) -> Result<Vec<f64>> {
    if observed.n() != windows.n() {
        return invalid("events and windows disagree on the number of entities");
    }
    (0..observed.n())
        .map(|m| {
            let ws = windows.windows(m);
            let time: f64 = ws.iter().map(|w| w.end - w.start).sum();
            if !(time > 0.0) {
                return invalid(format!("entity {m} has no observed time"));
            }
            let count = observed.times(m).iter().filter(|&&t| ws.iter().any(|w| inside(w, t))).count();
            Ok(count as f64 / time)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::precompute_stats;
    use crate::model::integrated_cif_window;
    use approx::assert_relative_eq;

    fn univariate() -> ModelParams {
        ModelParams::new(vec![1.0], vec![vec![0.5]], vec![2.0]).unwrap()
    }

    #[test]
    fn constant_intensity_is_exact_at_any_step() {
        let p = univariate();
        let ev = EventData::empty(1, 10.0).unwrap();
        let ws = WindowSet::shared(1, 10.0, vec![Window::new(2.0, 5.0)]).unwrap();
        let bounds = BoundaryIntensities::at_background(&p, &ws);
        for dt in [0.03, 0.0123, 0.001] {
            let q = quad_integrated_cif(&p, &ev, &ws, &bounds, 0, 0, QuadratureSpec { dt }).unwrap();
            assert_relative_eq!(q, 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_event_error_shrinks_quadratically() {
        let p = univariate();
        let ev = EventData::new(10.0, vec![vec![1.0]]).unwrap();
        let ws = WindowSet::shared(1, 10.0, vec![Window::new(0.0, 3.0)]).unwrap();
        let bounds = BoundaryIntensities::at_background(&p, &ws);
        let exact = 3.0 + 0.5 * (1.0 - (-4.0f64).exp());
        let err = |dt| (quad_integrated_cif(&p, &ev, &ws, &bounds, 0, 0, QuadratureSpec { dt }).unwrap() - exact).abs();
        let mut prev = err(0.03);
        for dt in [0.015, 0.0075, 0.00375] {
            let e = err(dt);
            let ratio = prev / e;
            assert!((3.8..4.2).contains(&ratio), "dt {dt}: ratio {ratio}");
            prev = e;
        }
        let closed = integrated_cif_window(&p, &ev, &ws, &bounds, 0, 0).unwrap();
        assert_relative_eq!(closed, exact, epsilon = 1e-14);
    }

    #[test]
    fn quadrature_rejects_coarse_steps() {
        let p = univariate();
        let ev = EventData::empty(1, 10.0).unwrap();
        let ws = WindowSet::shared(1, 10.0, vec![Window::new(0.0, 1.0)]).unwrap();
        let bounds = BoundaryIntensities::at_background(&p, &ws);
        assert!(quad_integrated_cif(&p, &ev, &ws, &bounds, 0, 0, QuadratureSpec { dt: 0.02 }).is_err());
        assert!(quad_integrated_cif(&p, &ev, &ws, &bounds, 0, 0, QuadratureSpec { dt: 0.0 }).is_err());
        assert!(quad_integrated_cif(&p, &ev, &ws, &bounds, 0, 3, QuadratureSpec { dt: 0.001 }).is_err());
    }

    #[test]
    fn brute_force_empty_and_one_term() {
        let ws = WindowSet::full(2, 10.0).unwrap();
        let empty = brute_force_stats(&EventData::empty(2, 10.0).unwrap(), &ws, &[1.0, 1.0]).unwrap();
        assert_eq!(empty.window(0, 0).event_count(), 0);
        assert!(empty.window(1, 0).mass.iter().all(|&x| x == 0.0));

        let ev = EventData::new(10.0, vec![vec![3.0], vec![2.5]]).unwrap();
        let st = brute_force_stats(&ev, &ws, &[2.0, 1.0]).unwrap();
        assert_relative_eq!(st.window(0, 0).kernel[1], 2.0 * (-1.0f64).exp(), epsilon = 1e-15);
        assert_eq!(st.window(0, 0).kernel[0], 0.0);
    }

    #[test]
    fn brute_force_agrees_with_recursion_on_a_fixed_instance() {
        let ev = EventData::new(
            20.0,
            vec![vec![0.5, 1.0, 2.2, 7.0, 7.1, 15.0], vec![0.7, 2.2, 6.9, 7.05, 14.0, 19.5]],
        )
        .unwrap();
        let ws = WindowSet::new(
            20.0,
            vec![
                vec![Window::new(0.0, 3.0), Window::new(6.5, 16.0)],
                vec![Window::new(0.0, 8.0), Window::new(13.0, 20.0)],
            ],
        )
        .unwrap();
        let fast = precompute_stats(&ev, &ws, &[1.5, 3.0]).unwrap();
        let slow = brute_force_stats(&ev, &ws, &[1.5, 3.0]).unwrap();
        for m in 0..2 {
            for (f, s) in fast.entity(m).iter().zip(slow.entity(m)) {
                assert_eq!(f.times, s.times);
                for (x, y) in f.kernel.iter().zip(&s.kernel).chain(f.kernel_lag.iter().zip(&s.kernel_lag)) {
                    assert!((x - y).abs() < 1e-12);
                }
                for (x, y) in f.mass.iter().zip(&s.mass).chain(f.mass_lag.iter().zip(&s.mass_lag)) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn brute_force_rejects_oversized_inputs() {
        let times: Vec<f64> = (1..=4000).map(|i| i as f64 * 0.25).collect();
        let ev = EventData::new(1000.0, vec![times]).unwrap();
        let ws = WindowSet::full(1, 1000.0).unwrap();
        assert!(brute_force_stats(&ev, &ws, &[1.0]).is_err());
    }

    #[test]
    fn fd_of_square() {
        let g = fd_gradient(|x| Ok(x[0] * x[0]), &[1.0], 0, 1e-5).unwrap();
        assert!((g - 2.0).abs() < 1e-8);
        assert!(fd_gradient(|x| Ok(x[0]), &[1.0], 0, 0.0).is_err());
        assert!(fd_gradient(|x| Ok(x[0].ln()), &[0.0], 0, 1e-3).is_err());
    }

    #[test]
    fn poisson_closed_form() {
        let times: Vec<f64> = (0..10).map(|i| 1.1 + 0.1 * i as f64).collect();
        let ev = EventData::new(10.0, vec![times, vec![]]).unwrap();
        let ws = WindowSet::shared(2, 10.0, vec![Window::new(1.0, 2.5), Window::new(4.0, 4.5)]).unwrap();
        assert_eq!(poisson_mle(&ev, &ws).unwrap(), vec![5.0, 0.0]);
        let none = WindowSet::new(10.0, vec![vec![Window::new(0.0, 1.0)], vec![]]).unwrap();
        assert!(poisson_mle(&EventData::empty(2, 10.0).unwrap(), &none).is_err());
    }
}
