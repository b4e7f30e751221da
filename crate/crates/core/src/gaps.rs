//! Observation windows: random generation, intersection and restriction of
//! complete event records to what the windows reveal.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{EventData, Window, WindowSet};
use crate::rng::{stream, StreamTag};

/// Settings for the alternating window/gap sampler.
///
/// Window lengths are drawn from `U(tau_min, tau_max)` and gap lengths from
/// `U(tau_min / 2p, tau_max / 2p)`. The realised long-run observed fraction
/// is therefore `2p / (1 + 2p)`, not `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapConfig {
    pub p: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    pub horizon: f64,
    pub seed: u64,
}

impl GapConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p < 1.0) {
            return invalid(format!("p = {} must lie in (0, 1)", self.p));
        }
        if !(self.tau_min > 0.0 && self.tau_min < self.tau_max) {
            return invalid(format!(
                "window bounds must satisfy 0 < tau_min < tau_max, got {} and {}",
                self.tau_min, self.tau_max
            ));
        }
        if !(self.horizon.is_finite() && self.tau_max <= self.horizon) {
            return invalid(format!(
                "tau_max = {} must not exceed the horizon {}",
                self.tau_max, self.horizon
            ));
        }
        Ok(())
    }

    /// Expected long-run fraction of time covered by windows.
    pub fn expected_fraction(&self) -> f64 {
        2.0 * self.p / (1.0 + 2.0 * self.p)
    }
}

/// How windows are assigned to entities.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowLayout {
    /// One draw shared by every entity.
    #[default]
    Shared,
    /// An independent draw per entity.
    PerEntity,
}

/// Draws one entity's windows using `rng`.
///
/// Starts at `c = 0`, alternates window and gap lengths, stops once a window
/// reaches the horizon (clipping it to `horizon`) or a gap ends at or past it
/// (the dangling window is dropped).
pub fn generate_windows_with<R: Rng + ?Sized>(config: &GapConfig, rng: &mut R) -> Result<Vec<Window>> {
    config.validate()?;
    let GapConfig { p, tau_min, tau_max, horizon, .. } = *config;
    let (gap_min, gap_max) = (tau_min / (2.0 * p), tau_max / (2.0 * p));
    let mut out = Vec::new();
    let mut start = 0.0;
    loop {
        let end = start + rng.random_range(tau_min..tau_max);
        if end >= horizon {
            out.push(Window::new(start, horizon));
            break;
        }
        out.push(Window::new(start, end));
        start = end + rng.random_range(gap_min..gap_max);
        if start >= horizon {
            break;
        }
    }
    Ok(out)
}

/// Single-entity draw from the config's own seed.
pub fn generate_windows(config: &GapConfig) -> Result<Vec<Window>> {
    let mut rng = stream(config.seed, StreamTag::Windows, &[0]);
    generate_windows_with(config, &mut rng)
}

/// Windows for `n` entities. Entity `m` uses stream `(seed, m)`; with a shared
/// layout every entity receives entity 0's draw.
pub fn generate_window_set(config: &GapConfig, n: usize, layout: WindowLayout) -> Result<WindowSet> {
    if n == 0 {
        return invalid("window set needs at least one entity");
    }
    let draw = |m: usize| {
        let mut rng = stream(config.seed, StreamTag::Windows, &[m as u64]);
        generate_windows_with(config, &mut rng)
    };
    let windows = match layout {
        WindowLayout::Shared => vec![draw(0)?; n],
        WindowLayout::PerEntity => (0..n).map(draw).collect::<Result<_>>()?,
    };
    WindowSet::new(config.horizon, windows)
}

/// Intersection of two ordered disjoint interval lists, with abutting
/// pieces merged so the output is canonical.
pub fn intersect_intervals(lhs: &[Window], rhs: &[Window]) -> Vec<Window> {
    let mut out: Vec<Window> = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < lhs.len() && j < rhs.len() {
        let start = lhs[i].start.max(rhs[j].start);
        let end = lhs[i].end.min(rhs[j].end);
        if start < end {
            push_merged(&mut out, Window::new(start, end));
        }
        if lhs[i].end < rhs[j].end {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

fn push_merged(out: &mut Vec<Window>, w: Window) {
    match out.last_mut() {
        Some(last) if last.end >= w.start => last.end = last.end.max(w.end),
        _ => out.push(w),
    }
}

/// Merges abutting intervals of an ordered disjoint list.
pub fn canonicalize(windows: &[Window]) -> Vec<Window> {
    let mut out = Vec::with_capacity(windows.len());
    for &w in windows {
        push_merged(&mut out, w);
    }
    out
}

/// Entity-wise intersection of several window sets over the same horizon.
pub fn intersect_windows(sets: &[WindowSet]) -> Result<WindowSet> {
    let Some((first, rest)) = sets.split_first() else {
        return invalid("intersect_windows: at least one window set is required");
    };
    for s in rest {
        if s.n() != first.n() {
            return invalid("intersect_windows: window sets have different entity counts");
        }
        if s.horizon() != first.horizon() {
            return invalid("intersect_windows: window sets have different horizons");
        }
    }
    let windows = (0..first.n())
        .map(|m| {
            rest.iter()
                .fold(canonicalize(first.windows(m)), |acc, s| intersect_intervals(&acc, s.windows(m)))
        })
        .collect();
    WindowSet::new(first.horizon(), windows)
}

/// Windows observed by every entity, assigned to all entities.
pub fn common_windows(set: &WindowSet) -> Result<WindowSet> {
    let mut acc = canonicalize(set.windows(0));
    for m in 1..set.n() {
        acc = intersect_intervals(&acc, set.windows(m));
    }
    WindowSet::shared(set.n(), set.horizon(), acc)
}

/// Keeps the events of each entity that fall inside one of its windows.
pub fn restrict_events(events: &EventData, windows: &WindowSet) -> Result<EventData> {
    if events.n() != windows.n() {
        return invalid(format!(
            "restrict_events: {} event entities but {} window entities",
            events.n(),
            windows.n()
        ));
    }
    if events.horizon() != windows.horizon() {
        return invalid("restrict_events: events and windows have different horizons");
    }
    let times = (0..events.n())
        .map(|m| {
            let ws = windows.windows(m);
            let mut k = 0;
            events
                .times(m)
                .iter()
                .copied()
                .filter(|&t| {
                    while k < ws.len() && ws[k].end < t {
                        k += 1;
                    }
                    k < ws.len() && ws[k].contains(t)
                })
                .collect()
        })
        .collect();
    EventData::new(events.horizon(), times)
}

/// Fraction of the horizon covered by each entity's windows.
pub fn observed_fraction(windows: &WindowSet) -> Vec<f64> {
    (0..windows.n())
        .map(|m| windows.windows(m).iter().map(Window::len).sum::<f64>() / windows.horizon())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(p: f64, horizon: f64, seed: u64) -> GapConfig {
        GapConfig { p, tau_min: 0.5, tau_max: 3.0, horizon, seed }
    }

    #[test]
    fn generated_windows_respect_sampling_ranges() {
        let c = cfg(0.3, 1000.0, 3);
        let ws = generate_windows(&c).unwrap();
        assert_eq!(ws[0].start, 0.0);
        WindowSet::new(1000.0, vec![ws.clone()]).unwrap();
        for w in &ws[..ws.len() - 1] {
            assert!(w.len() >= 0.5 && w.len() <= 3.0);
        }
        for pair in ws.windows(2) {
            let gap = pair[1].start - pair[0].end;
            assert!((0.5 / 0.6..=3.0 / 0.6).contains(&gap), "gap {gap}");
        }
        assert!(ws.last().unwrap().end <= 1000.0);
    }

    #[test]
    fn invalid_gap_configs_are_rejected() {
        assert!(generate_windows(&GapConfig { p: 0.0, ..cfg(0.3, 10.0, 1) }).is_err());
        assert!(generate_windows(&GapConfig { p: 1.0, ..cfg(0.3, 10.0, 1) }).is_err());
        assert!(generate_windows(&GapConfig { tau_min: 3.0, tau_max: 3.0, ..cfg(0.3, 10.0, 1) }).is_err());
        assert!(generate_windows(&GapConfig { tau_max: 30.0, ..cfg(0.3, 10.0, 1) }).is_err());
    }

    #[test]
    fn short_horizon_yields_a_single_clipped_window() {
        let c = GapConfig { p: 0.3, tau_min: 0.5, tau_max: 1.0, horizon: 1.0, seed: 1 };
        let ws = generate_windows(&c).unwrap();
        assert_eq!(ws[0].start, 0.0);
        assert!(ws.len() <= 1 || ws[0].end < 1.0);
        assert!(ws.last().unwrap().end <= 1.0);
    }

    #[test]
    fn realized_fraction_near_renewal_ratio() {
        for (p, expect) in [(0.3, 0.375), (0.1, 1.0 / 6.0)] {
            let set = generate_window_set(&cfg(p, 1000.0, 8), 1, WindowLayout::Shared).unwrap();
            let f = observed_fraction(&set)[0];
            assert!((f - expect).abs() < 0.05, "p={p}: {f}");
        }
    }

    #[test]
    fn layouts() {
        let c = cfg(0.3, 200.0, 4);
        let shared = generate_window_set(&c, 3, WindowLayout::Shared).unwrap();
        assert_eq!(shared.windows(0), shared.windows(2));
        let per = generate_window_set(&c, 3, WindowLayout::PerEntity).unwrap();
        assert_eq!(per.windows(0), shared.windows(0));
        assert_ne!(per.windows(0), per.windows(1));
    }

    #[test]
    fn interval_intersection_basics() {
        let a = WindowSet::new(3.0, vec![vec![Window::new(0.0, 2.0)]]).unwrap();
        let b = WindowSet::new(3.0, vec![vec![Window::new(1.0, 3.0)]]).unwrap();
        let i = intersect_windows(&[a.clone(), b]).unwrap();
        assert_eq!(i.windows(0), &[Window::new(1.0, 2.0)]);
        assert_eq!(intersect_windows(&[a.clone(), a.clone()]).unwrap(), a);
        assert!(intersect_windows(&[]).is_err());
    }

    #[test]
    fn intersection_merges_abutting_pieces() {
        let lhs = [Window::new(0.0, 1.0), Window::new(1.0, 2.0)];
        let rhs = [Window::new(0.5, 1.5)];
        assert_eq!(intersect_intervals(&lhs, &rhs), vec![Window::new(0.5, 1.5)]);
    }

    #[test]
    fn restriction_edge_cases() {
        let ev = EventData::new(10.0, vec![vec![1.0, 2.0, 5.0, 10.0], vec![3.0]]).unwrap();
        let full = WindowSet::full(2, 10.0).unwrap();
        assert_eq!(restrict_events(&ev, &full).unwrap(), ev);
        let ws = WindowSet::new(10.0, vec![vec![Window::new(1.0, 2.0), Window::new(4.0, 10.0)], vec![]]).unwrap();
        let r = restrict_events(&ev, &ws).unwrap();
        assert_eq!(r.times(0), &[2.0, 5.0, 10.0]);
        assert!(r.times(1).is_empty());
        assert_eq!(observed_fraction(&full), vec![1.0, 1.0]);
        assert_eq!(observed_fraction(&ws)[1], 0.0);
    }

    fn arb_windows(horizon: f64) -> impl Strategy<Value = Vec<Window>> {
        prop::collection::vec(0.0..horizon, 0..12).prop_map(move |mut cuts| {
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            cuts.chunks_exact(2).map(|c| Window::new(c[0], c[1])).collect()
        })
    }

    fn member(ws: &[Window], t: f64) -> bool {
        ws.iter().any(|w| w.contains(t))
    }

    proptest! {
        #[test]
        fn intersection_matches_pointwise_membership(a in arb_windows(10.0), b in arb_windows(10.0)) {
            let i = intersect_intervals(&a, &b);
            WindowSet::new(10.0, vec![i.clone()]).unwrap();
            for s in 1..2000 {
                let t = s as f64 * 0.005;
                prop_assert_eq!(member(&i, t), member(&a, t) && member(&b, t), "t = {}", t);
            }
            prop_assert_eq!(canonicalize(&i), i.clone());
            prop_assert_eq!(intersect_intervals(&b, &a), i);
        }

        #[test]
        fn restriction_is_idempotent_and_composes(
            a in arb_windows(10.0),
            b in arb_windows(10.0),
            raw in prop::collection::vec(0.001f64..10.0, 0..40),
        ) {
            let ev = EventData::from_pairs(1, 10.0, &raw.iter().map(|&t| (0, t)).collect::<Vec<_>>());
            prop_assume!(ev.is_ok());
            let ev = ev.unwrap();
            let wa = WindowSet::new(10.0, vec![a]).unwrap();
            let wb = WindowSet::new(10.0, vec![b]).unwrap();
            let once = restrict_events(&ev, &wa).unwrap();
            prop_assert_eq!(restrict_events(&once, &wa).unwrap(), once.clone());
            let both = intersect_windows(&[wa, wb.clone()]).unwrap();
            prop_assert_eq!(restrict_events(&ev, &both).unwrap(), restrict_events(&once, &wb).unwrap());
        }
    }
}
