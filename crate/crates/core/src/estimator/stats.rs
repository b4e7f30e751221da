//! Kernel sums that cache the per-event structure of the gapped likelihood
//! for a fixed decay vector.
//!
//! For target entity `m`, window `k = (c, d]` and observed target event
//! `t_i` in that window, the excitation from source entity `n` is
//! `A[i][n] = sum_{c < s < t_i} b_m exp(-b_m (t_i - s))` over observed events
//! `s` of `n`. The sums are built left to right: moving from `t_{i-1}` to
//! `t_i` scales the running sum by `exp(-b_m (t_i - t_{i-1}))` and adds the
//! source events that arrived in between.

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::model::{EventData, Window, WindowSet};

/// Sums for one target entity and one of its windows.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowStats {
    pub window: Window,
    /// Observed events of the target entity inside the window.
    pub times: Vec<f64>,
    /// `exp(-b (t_i - c))` per target event.
    pub boundary_decay: Vec<f64>,
    /// `exp(-b (d - c))`.
    pub window_decay: f64,
    /// `1 - exp(-b (d - c))`, computed without cancellation.
    pub window_decay_complement: f64,
    /// `A[i * N + n]`: scaled kernel sum.
    pub kernel: Vec<f64>,
    /// `sum exp(-b (t_i - s))`, i.e. the kernel sum without the `b` factor.
    pub kernel_unscaled: Vec<f64>,
    /// `sum (t_i - s) exp(-b (t_i - s))`.
    pub kernel_lag: Vec<f64>,
    /// `B[n] = sum_{c < s <= d} (1 - exp(-b (d - s)))`.
    pub mass: Vec<f64>,
    /// `dB[n]/db = sum_{c < s <= d} (d - s) exp(-b (d - s))`.
    pub mass_lag: Vec<f64>,
}

impl WindowStats {
    pub fn event_count(&self) -> usize {
        self.times.len()
    }
}

/// Kernel sums for every (target entity, window) pair at decay vector `decay`.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    n: usize,
    decay: Vec<f64>,
    entities: Vec<Vec<WindowStats>>,
}

impl SufficientStats {
    pub(crate) fn from_parts(n: usize, decay: Vec<f64>, entities: Vec<Vec<WindowStats>>) -> Self {
        Self { n, decay, entities }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn decay(&self) -> &[f64] {
        &self.decay
    }

    pub fn entity(&self, m: usize) -> &[WindowStats] {
        &self.entities[m]
    }

    pub fn window(&self, m: usize, k: usize) -> &WindowStats {
        &self.entities[m][k]
    }

    /// Recomputes the entities whose decay rate changed.
    pub fn refresh(&mut self, observed: &EventData, windows: &WindowSet, decay: &[f64]) -> Result<()> {
        check_decay(self.n, decay)?;
        let stale: Vec<usize> = (0..self.n).filter(|&m| self.decay[m] != decay[m]).collect();
        let fresh: Vec<(usize, Vec<WindowStats>)> = stale
            .into_par_iter()
            .map(|m| (m, entity_stats(observed, windows, m, decay[m])))
            .collect();
        for (m, s) in fresh {
            self.entities[m] = s;
            self.decay[m] = decay[m];
        }
        Ok(())
    }
}

fn check_decay(n: usize, decay: &[f64]) -> Result<()> {
    if decay.len() != n {
        return invalid(format!("decay vector has {} entries for {n} entities", decay.len()));
    }
    if let Some((m, b)) = decay.iter().enumerate().find(|(_, b)| !(b.is_finite() && **b > 0.0)) {
        return invalid(format!("b[{m}] = {b} must be finite and > 0"));
    }
    Ok(())
}

/// Fails if some observed event lies outside every window of its entity.
pub(crate) fn check_restricted(observed: &EventData, windows: &WindowSet) -> Result<()> {
    if observed.n() != windows.n() {
        return invalid(format!(
            "{} event entities but {} window entities",
            observed.n(),
            windows.n()
        ));
    }
    for m in 0..observed.n() {
        if let Some(t) = observed.times(m).iter().find(|&&t| windows.locate(m, t).is_none()) {
            return invalid(format!(
                "entity {m}: event at {t} lies outside the observation windows; restrict events first"
            ));
        }
    }
    Ok(())
}

pub fn precompute_stats(observed: &EventData, windows: &WindowSet, decay: &[f64]) -> Result<SufficientStats> {
    check_restricted(observed, windows)?;
    check_decay(observed.n(), decay)?;
    let entities = (0..observed.n())
        .into_par_iter()
        .map(|m| entity_stats(observed, windows, m, decay[m]))
        .collect();
    Ok(SufficientStats { n: observed.n(), decay: decay.to_vec(), entities })
}

fn entity_stats(observed: &EventData, windows: &WindowSet, m: usize, b: f64) -> Vec<WindowStats> {
    windows
        .windows(m)
        .iter()
        .map(|&w| window_stats(observed, w, m, b))
        .collect()
}

fn window_stats(observed: &EventData, window: Window, m: usize, b: f64) -> WindowStats {
    let n_src = observed.n();
    let (c, d) = (window.start, window.end);
    let target = observed.times(m);
    let lo = target.partition_point(|&t| t <= c);
    let hi = target.partition_point(|&t| t <= d);
    let times = target[lo..hi].to_vec();
    let n_ev = times.len();

    let mut kernel = vec![0.0; n_ev * n_src];
    let mut kernel_unscaled = vec![0.0; n_ev * n_src];
    let mut kernel_lag = vec![0.0; n_ev * n_src];
    let mut mass = vec![0.0; n_src];
    let mut mass_lag = vec![0.0; n_src];

    for n in 0..n_src {
        let src = observed.times(n);
        let s_lo = src.partition_point(|&s| s <= c);
        let s_hi = src.partition_point(|&s| s <= d);
        let sources = &src[s_lo..s_hi];

        let mut sum = 0.0;
        let mut lag_sum = 0.0;
        let mut prev = c;
        let mut next = 0;
        for (i, &t) in times.iter().enumerate() {
            let step = t - prev;
            let shrink = (-b * step).exp();
            lag_sum = (lag_sum + step * sum) * shrink;
            sum *= shrink;
            prev = t;
            while next < sources.len() && sources[next] < t {
                let lag = t - sources[next];
                let e = (-b * lag).exp();
                sum += e;
                lag_sum += lag * e;
                next += 1;
            }
            kernel_unscaled[i * n_src + n] = sum;
            kernel_lag[i * n_src + n] = lag_sum;
            kernel[i * n_src + n] = b * sum;
        }

        for &s in sources {
            let tail = d - s;
            mass[n] += -(-b * tail).exp_m1();
            mass_lag[n] += tail * (-b * tail).exp();
        }
    }

    let boundary_decay = times.iter().map(|&t| (-b * (t - c)).exp()).collect();
    WindowStats {
        window,
        times,
        boundary_decay,
        window_decay: (-b * (d - c)).exp(),
        window_decay_complement: -(-b * (d - c)).exp_m1(),
        kernel,
        kernel_unscaled,
        kernel_lag,
        mass,
        mass_lag,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_source_events_means_zero_sums() {
        let ev = EventData::new(10.0, vec![vec![1.5, 2.5], vec![7.0]]).unwrap();
        let ws = WindowSet::new(
            10.0,
            vec![vec![Window::new(1.0, 3.0)], vec![Window::new(6.0, 8.0)]],
        )
        .unwrap();
        let st = precompute_stats(&ev, &ws, &[2.0, 3.0]).unwrap();
        let w = st.window(0, 0);
        assert_eq!(w.times, vec![1.5, 2.5]);
        for i in 0..2 {
            assert_eq!(w.kernel[i * 2 + 1], 0.0);
        }
        assert_eq!(w.mass[1], 0.0);
        assert_eq!(w.kernel[0], 0.0);
        assert!((w.kernel[2] - 2.0 * (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn source_event_at_right_endpoint_has_no_mass() {
        let ev = EventData::new(10.0, vec![vec![], vec![3.0]]).unwrap();
        let ws = WindowSet::shared(2, 10.0, vec![Window::new(1.0, 3.0)]).unwrap();
        let st = precompute_stats(&ev, &ws, &[2.0, 2.0]).unwrap();
        assert_eq!(st.window(0, 0).mass[1], 0.0);
        assert_eq!(st.window(0, 0).mass_lag[1], 0.0);
    }

    #[test]
    fn tied_source_event_is_not_counted_for_itself() {
        let ev = EventData::new(10.0, vec![vec![2.0, 2.5], vec![2.0]]).unwrap();
        let ws = WindowSet::full(2, 10.0).unwrap();
        let st = precompute_stats(&ev, &ws, &[1.0, 1.0]).unwrap();
        let w = st.window(0, 0);
        // the entity-1 event at 2.0 does not excite the entity-0 event at 2.0
        assert_eq!(w.kernel[1], 0.0);
        assert!((w.kernel_unscaled[3] - (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn rejects_unrestricted_events_and_bad_decay() {
        let ev = EventData::new(10.0, vec![vec![5.0]]).unwrap();
        let ws = WindowSet::shared(1, 10.0, vec![Window::new(1.0, 3.0)]).unwrap();
        assert!(precompute_stats(&ev, &ws, &[1.0]).is_err());
        let ws = WindowSet::full(1, 10.0).unwrap();
        assert!(precompute_stats(&ev, &ws, &[0.0]).is_err());
        assert!(precompute_stats(&ev, &ws, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn refresh_matches_a_fresh_computation() {
        let ev = EventData::new(10.0, vec![vec![1.0, 2.0, 4.0], vec![1.5, 3.0]]).unwrap();
        let ws = WindowSet::full(2, 10.0).unwrap();
        let mut st = precompute_stats(&ev, &ws, &[1.0, 2.0]).unwrap();
        st.refresh(&ev, &ws, &[1.0, 5.0]).unwrap();
        assert_eq!(st, precompute_stats(&ev, &ws, &[1.0, 5.0]).unwrap());
    }
}
