use approx::assert_relative_eq;

use super::*;
use crate::gaps::{generate_window_set, restrict_events, GapConfig, WindowLayout};
use crate::model::{EventData, Window, WindowSet};
use crate::oracle::{fd_gradient, poisson_mle};
use crate::simulator::{simulate, SimConfig};

fn instance() -> (EventData, WindowSet) {
    let ev = EventData::new(
        12.0,
        vec![vec![0.4, 0.9, 1.3, 2.8, 6.2, 6.5, 7.9, 11.0], vec![0.2, 1.1, 2.5, 6.1, 6.3, 7.7, 10.5]],
    )
    .unwrap();
    let ws = WindowSet::shared(
        2,
        12.0,
        vec![Window::new(0.0, 3.0), Window::new(6.0, 8.0), Window::new(10.0, 11.5)],
    )
    .unwrap();
    (ev, ws)
}

fn params(u: [f64; 2], a: [f64; 4], b: [f64; 2]) -> ModelParams {
    ModelParams::from_flat(u.to_vec(), a.to_vec(), b.to_vec()).unwrap()
}

fn interior_bounds(ws: &WindowSet) -> BoundaryIntensities {
    BoundaryIntensities::new(ws, vec![vec![2.5, 3.0, 1.7], vec![2.0, 4.0, 2.2]]).unwrap()
}

fn objective_at(p: &ModelParams, bounds: &BoundaryIntensities, ev: &EventData, ws: &WindowSet, mu: f64) -> f64 {
    let stats = precompute_stats(ev, ws, p.b()).unwrap();
    objective(p, bounds, &stats, mu).unwrap()
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let f_lo = f(lo);
    assert!(f_lo * f(hi) < 0.0, "no sign change on [{lo}, {hi}]");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) < 0.0) == (f_lo < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn poisson_objective_is_minimised_at_count_over_time() {
    let (ev, ws) = instance();
    let only_first = EventData::new(12.0, vec![ev.times(0).to_vec(), vec![]]).unwrap();
    let rate = poisson_mle(&only_first, &ws).unwrap()[0];
    let j = |u: f64| {
        let p = params([u, 1.0], [0.0; 4], [2.0, 2.0]);
        let bounds = BoundaryIntensities::at_background(&p, &ws);
        objective_at(&p, &bounds, &only_first, &ws, 0.0)
    };
    let g = fd_gradient(|x| Ok(j(x[0])), &[rate], 0, 1e-5).unwrap();
    assert!(g.abs() < 1e-6, "{g}");
    assert!(j(rate) < j(rate * 1.01) && j(rate) < j(rate * 0.99));
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let (ev, ws) = instance();
    let p = params([0.8, 1.2], [0.3, 0.2, 0.1, 0.4], [1.5, 2.5]);
    let bounds = interior_bounds(&ws);
    let stats = precompute_stats(&ev, &ws, p.b()).unwrap();
    let mode = BoundaryMode::Box(1e3);

    let gu = gradient_u(&p, &bounds, &stats, mode).unwrap();
    let ga = gradient_a(&p, &bounds, &stats).unwrap();
    let gl = gradient_boundary(&p, &bounds, &stats).unwrap();
    let terms = decay_terms(&p, &bounds, &stats).unwrap();
    for m in 0..2 {
        let fd = fd_gradient(
            |x| {
                let mut u = p.u().to_vec();
                u[m] = x[0];
                let q = ModelParams::from_flat(u, p.a_flat().to_vec(), p.b().to_vec())?;
                Ok(objective_at(&q, &bounds, &ev, &ws, 0.0))
            },
            &[p.u()[m]],
            0,
            1e-5,
        )
        .unwrap();
        assert_relative_eq!(gu[m], fd, max_relative = 1e-6);

        let fd = fd_gradient(
            |x| {
                let mut b = p.b().to_vec();
                b[m] = x[0];
                let q = ModelParams::from_flat(p.u().to_vec(), p.a_flat().to_vec(), b)?;
                Ok(objective_at(&q, &bounds, &ev, &ws, 0.0))
            },
            &[p.b()[m]],
            0,
            1e-5,
        )
        .unwrap();
        assert_relative_eq!(terms[m].derivative(p.b()[m]), fd, max_relative = 1e-6);

        for k in 0..3 {
            let fd = fd_gradient(
                |x| {
                    let mut values = bounds.values().to_vec();
                    values[m][k] = x[0];
                    let q = BoundaryIntensities::new(&ws, values)?;
                    Ok(objective_at(&p, &q, &ev, &ws, 0.0))
                },
                &[bounds.get(m, k)],
                0,
                1e-5,
            )
            .unwrap();
            assert_relative_eq!(gl[m][k], fd, max_relative = 1e-6);
        }
    }
    for idx in 0..4 {
        let fd = fd_gradient(
            |x| {
                let mut a = p.a_flat().to_vec();
                a[idx] = x[0];
                let q = ModelParams::from_flat(p.u().to_vec(), a, p.b().to_vec())?;
                Ok(objective_at(&q, &bounds, &ev, &ws, 0.0))
            },
            &[p.a_flat()[idx]],
            0,
            1e-5,
        )
        .unwrap();
        assert_relative_eq!(ga[idx], fd, max_relative = 1e-6);
    }
}

#[test]
fn tied_background_gradient_moves_the_boundaries_too() {
    let (ev, ws) = instance();
    let p = params([0.8, 1.2], [0.3, 0.2, 0.1, 0.4], [1.5, 2.5]);
    let stats = precompute_stats(&ev, &ws, p.b()).unwrap();
    let g = gradient_u(&p, &BoundaryIntensities::at_background(&p, &ws), &stats, BoundaryMode::FixedAtU).unwrap();
    for m in 0..2 {
        let fd = fd_gradient(
            |x| {
                let mut u = p.u().to_vec();
                u[m] = x[0];
                let q = ModelParams::from_flat(u, p.a_flat().to_vec(), p.b().to_vec())?;
                Ok(objective_at(&q, &BoundaryIntensities::at_background(&q, &ws), &ev, &ws, 0.0))
            },
            &[p.u()[m]],
            0,
            1e-5,
        )
        .unwrap();
        assert_relative_eq!(g[m], fd, max_relative = 1e-6);
    }
}

#[test]
fn background_update_is_a_no_op_at_a_stationary_point() {
    let (ev, ws) = instance();
    let bounds = interior_bounds(&ws);
    let mode = BoundaryMode::Box(1e3);
    let base = params([1.0, 1.0], [0.3, 0.2, 0.1, 0.4], [1.5, 2.5]);
    let stats = precompute_stats(&ev, &ws, base.b()).unwrap();
    let at = |u0: f64| params([u0, 1.0], [0.3, 0.2, 0.1, 0.4], [1.5, 2.5]);
    let u_star = bisect(1e-3, 1.6, |u0| gradient_u(&at(u0), &bounds, &stats, mode).unwrap()[0]);
    let p = at(u_star);
    let next = update_u(&p, &bounds, &stats, mode, &mut UpdateFlags::default()).unwrap();
    assert_relative_eq!(next[0], u_star, max_relative = 1e-12);
}

#[test]
fn decay_update_is_a_no_op_at_a_stationary_point() {
    let (ev, ws) = instance();
    let bounds = interior_bounds(&ws);
    let at = |b0: f64| params([0.8, 1.2], [0.3, 0.2, 0.1, 0.4], [b0, 2.5]);
    let derivative = |b0: f64| {
        let p = at(b0);
        let stats = precompute_stats(&ev, &ws, p.b()).unwrap();
        decay_terms(&p, &bounds, &stats).unwrap()[0].derivative(b0)
    };
    let grid: Vec<f64> = (0..60).map(|i| 0.05 * 1.15f64.powi(i)).collect();
    let bracket = grid.windows(2).find(|w| derivative(w[0]) * derivative(w[1]) < 0.0).expect("sign change");
    let b_star = bisect(bracket[0], bracket[1], derivative);
    let p = at(b_star);
    let stats = precompute_stats(&ev, &ws, p.b()).unwrap();
    let next = update_b(&p, &bounds, &stats, &mut UpdateFlags::default()).unwrap();
    assert_relative_eq!(next[0], b_star, max_relative = 1e-10);
}

#[test]
fn entity_without_events_gets_zero_background() {
    let (ev, ws) = instance();
    let ev = EventData::new(12.0, vec![ev.times(0).to_vec(), vec![]]).unwrap();
    let p = params([1.0, 1.0], [0.2; 4], [2.0, 2.0]);
    let stats = precompute_stats(&ev, &ws, p.b()).unwrap();
    let bounds = BoundaryIntensities::at_background(&p, &ws);
    let mut flags = UpdateFlags::default();
    for mode in [BoundaryMode::FixedAtU, BoundaryMode::Box(20.0)] {
        let u = update_u(&p, &bounds, &stats, mode, &mut flags).unwrap();
        assert_eq!(u[1], 0.0);
        assert!(u[0] > 0.0);
    }
    // no entity-1 events means no excitation from entity 1
    let a = update_a(&p, &bounds, &stats, 0.0, &mut flags).unwrap();
    assert_eq!(a[1], 0.0);
    assert_eq!(a[3], 0.0);
}

#[test]
fn large_penalty_zeroes_the_excitation_exactly() {
    let (ev, ws) = instance();
    let p = params([1.0, 1.0], [0.2; 4], [2.0, 2.0]);
    let stats = precompute_stats(&ev, &ws, p.b()).unwrap();
    let bounds = BoundaryIntensities::at_background(&p, &ws);
    let a = update_a(&p, &bounds, &stats, 1e6, &mut UpdateFlags::default()).unwrap();
    assert!(a.iter().all(|&x| x == 0.0));
}

#[test]
fn zero_excitation_reenters_when_zero_is_not_optimal() {
    // tight pairs: every entity-0 event follows an entity-1 event closely
    let src: Vec<f64> = (0..40).map(|i| 1.0 + i as f64).collect();
    let dst: Vec<f64> = src.iter().map(|s| s + 0.05).collect();
    let ev = EventData::new(50.0, vec![dst, src]).unwrap();
    let ws = WindowSet::full(2, 50.0).unwrap();
    let p = params([0.5, 0.8], [0.0; 4], [5.0, 5.0]);
    let stats = precompute_stats(&ev, &ws, p.b()).unwrap();
    let bounds = BoundaryIntensities::at_background(&p, &ws);
    let a = update_a(&p, &bounds, &stats, 0.0, &mut UpdateFlags::default()).unwrap();
    assert!(a[1] > 0.0, "{a:?}");
    assert_eq!(a[2], 0.0);
}

#[test]
fn decay_update_stalls_without_excitation() {
    let (ev, ws) = instance();
    let p = params([1.0, 1.0], [0.0; 4], [3.0, 4.0]);
    let stats = precompute_stats(&ev, &ws, p.b()).unwrap();
    let bounds = BoundaryIntensities::at_background(&p, &ws);
    let mut flags = UpdateFlags::default();
    let b = update_b(&p, &bounds, &stats, &mut flags).unwrap();
    assert_eq!(b, vec![3.0, 4.0]);
    assert_eq!(flags.stalled_decay_updates, 2);
}

#[test]
fn boundary_update_modes() {
    let (ev, ws) = instance();
    let ev = EventData::new(12.0, vec![ev.times(0).to_vec(), vec![0.2, 1.1, 2.5]]).unwrap();
    let p = params([0.7, 0.9], [0.2; 4], [2.0, 2.0]);
    let stats = precompute_stats(&ev, &ws, p.b()).unwrap();
    let bounds = interior_bounds(&ws);
    let mut flags = UpdateFlags::default();
    let fixed = update_lambda(&p, &bounds, &stats, BoundaryMode::FixedAtU, &mut flags).unwrap();
    assert!(fixed.values().iter().zip(p.u()).all(|(row, &u)| row.iter().all(|&v| v == u)));
    let boxed = update_lambda(&p, &bounds, &stats, BoundaryMode::Box(20.0), &mut flags).unwrap();
    // entity 1 has no events in its last two windows
    assert_eq!(boxed.get(1, 1), 0.9);
    assert_eq!(boxed.get(1, 2), 0.9);
    for (row, &u) in boxed.values().iter().zip(p.u()) {
        assert!(row.iter().all(|&v| v >= u && v <= 20.0 * u));
    }
}

#[test]
fn tied_boundaries_follow_the_background() {
    let ws = WindowSet::shared(1, 10.0, vec![Window::new(0.0, 2.0), Window::new(3.0, 5.0), Window::new(6.0, 9.0)]).unwrap();
    let old = params1(2.0);
    let bounds = BoundaryIntensities::new(&ws, vec![vec![2.0, 7.0, 40.0]]).unwrap();
    let moved = follow_background(&bounds, old.u(), &params1(3.0), BoundaryMode::Box(20.0));
    assert_eq!(moved.values(), &[vec![3.0, 7.0, 60.0]]);
    assert_eq!(boundary_link(BoundaryMode::Box(20.0), 2.0, 7.0), None);
    assert_eq!(boundary_link(BoundaryMode::FixedAtU, 2.0, 7.0), Some(1.0));
}

fn params1(u: f64) -> ModelParams {
    ModelParams::new(vec![u], vec![vec![0.3]], vec![2.0]).unwrap()
}

#[test]
fn poisson_fit_recovers_count_over_time() {
    let truth = params([5.0, 5.0], [0.0; 4], [10.0, 10.0]);
    let ev = simulate(&SimConfig::new(truth, 200.0, 7)).unwrap();
    let gaps = GapConfig { p: 0.3, tau_min: 0.5, tau_max: 3.0, horizon: 200.0, seed: 7 };
    let ws = generate_window_set(&gaps, 2, WindowLayout::Shared).unwrap();
    let obs = restrict_events(&ev, &ws).unwrap();
    let config = FitConfig { mu: Some(1e9), boundary: BoundaryMode::FixedAtU, ..Default::default() };
    let fit = fit(&obs, &ws, &config).unwrap();
    let mle = poisson_mle(&obs, &ws).unwrap();
    assert!(fit.converged);
    assert!(fit.params.a_flat().iter().all(|&a| a == 0.0));
    for (u, r) in fit.params.u().iter().zip(&mle) {
        assert_relative_eq!(*u, *r, max_relative = 1e-6);
    }
}

#[test]
fn full_window_fit_coincides_with_the_baseline() {
    let truth = params([1.0, 0.5], [0.3, 0.2, 0.0, 0.4], [4.0, 6.0]);
    let ev = simulate(&SimConfig::new(truth.clone(), 200.0, 3)).unwrap();
    let ws = WindowSet::full(2, 200.0).unwrap();
    let config = FitConfig { mu: Some(0.5), boundary: BoundaryMode::FixedAtU, ..Default::default() };
    let gapped = fit(&ev, &ws, &config).unwrap();
    let blind = fit_mhp(&ev, 200.0, &FitConfig { boundary: BoundaryMode::Box(20.0), ..config.clone() }).unwrap();
    assert_eq!(gapped.params, blind.params);
    let stats = precompute_stats(&ev, &ws, truth.b()).unwrap();
    let j = objective(&truth, &BoundaryIntensities::at_background(&truth, &ws), &stats, 0.5).unwrap();
    assert_relative_eq!(j, mhp_objective(&truth, &ev, 0.5).unwrap(), max_relative = 1e-12);
}

#[test]
fn empty_data_drives_parameters_to_zero() {
    let ev = EventData::empty(2, 100.0).unwrap();
    let fit = fit_mhp(&ev, 100.0, &FitConfig::default()).unwrap();
    assert!(fit.params.u().iter().all(|&u| u == 0.0));
    assert!(fit.params.a_flat().iter().all(|&a| a == 0.0));
    assert_eq!(fit.final_objective(), 0.0);
}

#[test]
fn univariate_full_observation_recovers_excitation() {
    let truth = ModelParams::new(vec![5.0], vec![vec![0.5]], vec![10.0]).unwrap();
    let ev = simulate(&SimConfig::new(truth, 1000.0, 11)).unwrap();
    let fit = fit_mhp(&ev, 1000.0, &FitConfig { mu: Some(0.0), ..Default::default() }).unwrap();
    assert!((fit.params.a(0, 0) - 0.5).abs() < 0.05, "{:?}", fit.params);
    assert!((fit.params.u()[0] - 5.0).abs() < 0.5, "{:?}", fit.params);
}

#[test]
fn objective_trace_is_non_increasing() {
    let truth = params([5.0, 5.0], [0.5, 0.5, 0.0, 0.5], [10.0, 10.0]);
    let ev = simulate(&SimConfig::new(truth, 300.0, 5)).unwrap();
    let gaps = GapConfig { p: 0.3, tau_min: 0.5, tau_max: 3.0, horizon: 300.0, seed: 5 };
    let ws = generate_window_set(&gaps, 2, WindowLayout::Shared).unwrap();
    let obs = restrict_events(&ev, &ws).unwrap();
    for boundary in [BoundaryMode::FixedAtU, BoundaryMode::Box(20.0)] {
        let fit = fit(&obs, &ws, &FitConfig { boundary, ..Default::default() }).unwrap();
        assert_eq!(fit.objective_trace.len(), fit.iterations + 1);
        for pair in fit.objective_trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-8 * (1.0 + pair[0].abs()), "{pair:?}");
        }
        for (row, &u) in fit.bounds.values().iter().zip(fit.params.u()) {
            assert!(row.iter().all(|&v| v >= u));
        }
    }
}

#[test]
fn boundaries_rise_after_dense_activity() {
    let truth = params([1.0, 2.0], [0.9, 0.75, 0.0, 0.9], [10.0, 10.0]);
    let ev = simulate(&SimConfig::new(truth, 200.0, 2)).unwrap();
    let gaps = GapConfig { p: 0.3, tau_min: 0.5, tau_max: 3.0, horizon: 200.0, seed: 2 };
    let ws = generate_window_set(&gaps, 2, WindowLayout::Shared).unwrap();
    let obs = restrict_events(&ev, &ws).unwrap();
    let fit = fit(&obs, &ws, &FitConfig::default()).unwrap();
    let u = fit.params.u()[0];
    assert!(fit.bounds.entity(0).iter().any(|&v| v > 1.5 * u));
}

#[test]
fn config_validation() {
    let bad = [
        FitConfig { mu: Some(-1.0), ..Default::default() },
        FitConfig { boundary: BoundaryMode::Box(0.5), ..Default::default() },
        FitConfig { tol: 0.0, ..Default::default() },
        FitConfig { max_iter: 0, ..Default::default() },
    ];
    for config in bad {
        assert!(config.validate().is_err());
    }
    let (ev, ws) = instance();
    let init = InitialState { params: params1(1.0), bounds: None };
    assert!(fit(&ev, &ws, &FitConfig { init: Some(init), ..Default::default() }).is_err());
}

#[test]
fn max_iter_limits_the_run() {
    let truth = params([1.0, 1.0], [0.4, 0.2, 0.2, 0.4], [5.0, 5.0]);
    let ev = simulate(&SimConfig::new(truth, 100.0, 9)).unwrap();
    let ws = WindowSet::full(2, 100.0).unwrap();
    let fit = fit(&ev, &ws, &FitConfig { max_iter: 3, mu: Some(0.0), ..Default::default() }).unwrap();
    assert_eq!(fit.iterations, 3);
    assert!(!fit.converged);
    assert_eq!(fit.objective_trace.len(), 4);
}
