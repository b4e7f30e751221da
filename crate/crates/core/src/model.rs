//! Domain types and exact evaluation of the conditional intensity function
//! (CIF), both for a complete event record and for the gapped formulation
//! where each observation window carries its own unknown boundary intensity.
//!
//! Entities are indexed from 0. Intervals are half-open on the left: a
//! window `(c, d]` contains `t` iff `c < t <= d`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, HawkesError, Result};

/// Parameters of an `N`-variate Hawkes process with exponential kernels.
///
/// The intensity of entity `m` is
/// `u[m] + sum_n a[m][n] * sum_{t_nj < t} b[m] * exp(-b[m] * (t - t_nj))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsRepr", into = "ParamsRepr")]
pub struct ModelParams {
    u: Vec<f64>,
    /// Row-major `N x N`.
    a: Vec<f64>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ParamsRepr {
    u: Vec<f64>,
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl TryFrom<ParamsRepr> for ModelParams {
    type Error = HawkesError;

    fn try_from(r: ParamsRepr) -> Result<Self> {
        ModelParams::new(r.u, r.a, r.b)
    }
}

impl From<ModelParams> for ParamsRepr {
    fn from(p: ModelParams) -> Self {
        let a = p.a_rows();
        ParamsRepr { u: p.u, a, b: p.b }
    }
}

impl ModelParams {
    /// Builds a validated parameter set; `a` is given as rows.
    pub fn new(u: Vec<f64>, a: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self> {
        let n = u.len();
        if n == 0 {
            return invalid("u: at least one entity is required");
        }
        if a.len() != n || a.iter().any(|row| row.len() != n) {
            return invalid(format!("a: expected a {n}x{n} matrix"));
        }
        if b.len() != n {
            return invalid(format!("b: expected {n} entries, got {}", b.len()));
        }
        let flat: Vec<f64> = a.into_iter().flatten().collect();
        Self::from_flat(u, flat, b)
    }

    /// Builds from a row-major flattened excitation matrix.
    pub fn from_flat(u: Vec<f64>, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let n = u.len();
        if n == 0 {
            return invalid("u: at least one entity is required");
        }
        if a.len() != n * n {
            return invalid(format!("a: expected {} entries, got {}", n * n, a.len()));
        }
        if b.len() != n {
            return invalid(format!("b: expected {n} entries, got {}", b.len()));
        }
        if let Some((m, v)) = u.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return invalid(format!("u[{m}] = {v}: background rates must be finite and >= 0"));
        }
        if let Some((i, v)) = a.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return invalid(format!(
                "a[{}][{}] = {v}: excitation weights must be finite and >= 0",
                i / n,
                i % n
            ));
        }
        if let Some((m, v)) = b.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return invalid(format!("b[{m}] = {v}: decay rates must be finite and > 0"));
        }
        Ok(Self { u, a, b })
    }

    pub fn n(&self) -> usize {
        self.u.len()
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// Row-major flattened excitation matrix.
    pub fn a_flat(&self) -> &[f64] {
        &self.a
    }

    pub fn a(&self, m: usize, n: usize) -> f64 {
        self.a[m * self.n() + n]
    }

    pub fn a_row(&self, m: usize) -> &[f64] {
        let n = self.n();
        &self.a[m * n..(m + 1) * n]
    }

    pub fn a_rows(&self) -> Vec<Vec<f64>> {
        self.a.chunks(self.n()).map(<[f64]>::to_vec).collect()
    }

    pub(crate) fn set_u(&mut self, u: Vec<f64>) {
        debug_assert_eq!(u.len(), self.n());
        self.u = u;
    }

    pub(crate) fn set_a(&mut self, a: Vec<f64>) {
        debug_assert_eq!(a.len(), self.n() * self.n());
        self.a = a;
    }

    pub(crate) fn set_b(&mut self, b: Vec<f64>) {
        debug_assert_eq!(b.len(), self.n());
        self.b = b;
    }

    /// Spectral radius of the excitation matrix.
    pub fn spectral_radius(&self) -> f64 {
        spectral_radius_flat(self.n(), &self.a)
    }

    /// A Hawkes process is stationary iff the spectral radius of `a` is < 1.
    pub fn is_stationary(&self) -> bool {
        self.spectral_radius() < 1.0
    }

    /// Long-run mean intensity `x` solving `x = u + a x`, if stationary.
    pub fn stationary_rates(&self) -> Option<Vec<f64>> {
        if !self.is_stationary() {
            return None;
        }
        let n = self.n();
        let a = DMatrix::from_row_slice(n, n, &self.a);
        let lhs = DMatrix::identity(n, n) - a;
        let rhs = nalgebra::DVector::from_column_slice(&self.u);
        lhs.lu().solve(&rhs).map(|x| x.iter().copied().collect())
    }
}

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 10_000;
const DENSE_FALLBACK_MAX_N: usize = 16;

/// Largest eigenvalue modulus of a square matrix given as rows.
pub fn spectral_radius(rows: &[Vec<f64>]) -> Result<f64> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return invalid("spectral_radius: matrix is not square");
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return invalid("spectral_radius: matrix has non-finite entries");
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(spectral_radius_flat(n, &flat))
}

pub(crate) fn spectral_radius_flat(n: usize, a: &[f64]) -> f64 {
    if n == 0 {
        return 0.0;
    }
    match power_iteration(n, a) {
        Some(rho) => rho,
        None if n <= DENSE_FALLBACK_MAX_N => dense_spectral_radius(n, a),
        None => {
            log::warn!("power iteration did not converge for a {n}x{n} matrix; using last estimate");
            power_estimate(n, a, POWER_MAX_ITER)
        }
    }
}

/// Power iteration from the all-ones vector. Returns `None` when the
/// successive norm ratios fail to settle within the iteration cap.
fn power_iteration(n: usize, a: &[f64]) -> Option<f64> {
    let mut x = vec![1.0 / n as f64; n];
    let mut prev = f64::NAN;
    for _ in 0..POWER_MAX_ITER {
        let y = mat_vec(n, a, &x);
        let norm = y.iter().map(|v| v.abs()).sum::<f64>();
        if norm == 0.0 {
            return Some(0.0);
        }
        // x has unit l1 norm, so the l1 norm of y estimates the dominant root.
        if (norm - prev).abs() <= POWER_TOL * norm.max(1.0) {
            return Some(norm);
        }
        prev = norm;
        x = y.into_iter().map(|v| v / norm).collect();
    }
    None
}

fn power_estimate(n: usize, a: &[f64], iters: usize) -> f64 {
    let mut x = vec![1.0 / n as f64; n];
    let mut norm = 0.0;
    for _ in 0..iters {
        let y = mat_vec(n, a, &x);
        norm = y.iter().map(|v| v.abs()).sum::<f64>();
        if norm == 0.0 {
            return 0.0;
        }
        x = y.into_iter().map(|v| v / norm).collect();
    }
    norm
}

fn dense_spectral_radius(n: usize, a: &[f64]) -> f64 {
    let m = DMatrix::from_row_slice(n, n, a);
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

fn mat_vec(n: usize, a: &[f64], x: &[f64]) -> Vec<f64> {
    a.chunks(n)
        .map(|row| row.iter().zip(x).map(|(r, v)| r * v).sum())
        .collect()
}

/// Per-entity strictly increasing event times on `(0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventData {
    horizon: f64,
    times: Vec<Vec<f64>>,
}

impl EventData {
    pub fn new(horizon: f64, times: Vec<Vec<f64>>) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return invalid(format!("horizon must be finite and > 0, got {horizon}"));
        }
        if times.is_empty() {
            return invalid("event data needs at least one entity");
        }
        for (m, ts) in times.iter().enumerate() {
            for (i, &t) in ts.iter().enumerate() {
                if !(t > 0.0 && t <= horizon) {
                    return invalid(format!("entity {m}, event {i}: time {t} outside (0, {horizon}]"));
                }
                if i > 0 && t <= ts[i - 1] {
                    return invalid(format!("entity {m}, event {i}: times must be strictly increasing"));
                }
            }
        }
        Ok(Self { horizon, times })
    }

    pub fn empty(n: usize, horizon: f64) -> Result<Self> {
        Self::new(horizon, vec![Vec::new(); n])
    }

    /// Builds from unordered `(entity, time)` pairs.
    pub fn from_pairs(n: usize, horizon: f64, pairs: &[(usize, f64)]) -> Result<Self> {
        let mut times = vec![Vec::new(); n];
        for &(m, t) in pairs {
            match times.get_mut(m) {
                Some(ts) => ts.push(t),
                None => return invalid(format!("entity index {m} out of range for {n} entities")),
            }
        }
        for ts in &mut times {
            ts.sort_by(f64::total_cmp);
        }
        Self::new(horizon, times)
    }

    pub fn n(&self) -> usize {
        self.times.len()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn times(&self, m: usize) -> &[f64] {
        &self.times[m]
    }

    pub fn all_times(&self) -> &[Vec<f64>] {
        &self.times
    }

    pub fn counts(&self) -> Vec<usize> {
        self.times.iter().map(Vec::len).collect()
    }

    pub fn total_count(&self) -> usize {
        self.times.iter().map(Vec::len).sum()
    }

    /// Number of events of each entity in `(0, end]`.
    pub fn counts_until(&self, end: f64) -> Vec<usize> {
        self.times.iter().map(|ts| ts.partition_point(|&t| t <= end)).collect()
    }
}

/// Half-open observation interval `(start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl Window {
    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn contains(&self, t: f64) -> bool {
        self.start < t && t <= self.end
    }
}

/// Per-entity disjoint, ordered observation windows inside `(0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    horizon: f64,
    windows: Vec<Vec<Window>>,
}

impl WindowSet {
    pub fn new(horizon: f64, windows: Vec<Vec<Window>>) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return invalid(format!("horizon must be finite and > 0, got {horizon}"));
        }
        if windows.is_empty() {
            return invalid("window set needs at least one entity");
        }
        for (m, ws) in windows.iter().enumerate() {
            for (k, w) in ws.iter().enumerate() {
                if !(w.start >= 0.0 && w.start < w.end && w.end <= horizon) {
                    return invalid(format!(
                        "entity {m}, window {k}: ({}, {}] violates 0 <= c < d <= {horizon}",
                        w.start, w.end
                    ));
                }
                if k > 0 && ws[k - 1].end > w.start {
                    return invalid(format!("entity {m}, window {k}: windows must be disjoint and ordered"));
                }
            }
        }
        Ok(Self { horizon, windows })
    }

    /// A single window `(0, horizon]` for every entity.
    pub fn full(n: usize, horizon: f64) -> Result<Self> {
        Self::new(horizon, vec![vec![Window::new(0.0, horizon)]; n])
    }

    /// The same windows for every entity.
    pub fn shared(n: usize, horizon: f64, windows: Vec<Window>) -> Result<Self> {
        Self::new(horizon, vec![windows; n])
    }

    pub fn n(&self) -> usize {
        self.windows.len()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn windows(&self, m: usize) -> &[Window] {
        &self.windows[m]
    }

    pub fn all_windows(&self) -> &[Vec<Window>] {
        &self.windows
    }

    pub fn window_count(&self) -> usize {
        self.windows.iter().map(Vec::len).sum()
    }

    /// Index of the window of entity `m` containing `t`.
    pub fn locate(&self, m: usize, t: f64) -> Option<usize> {
        let ws = &self.windows[m];
        let k = ws.partition_point(|w| w.end < t);
        (k < ws.len() && ws[k].contains(t)).then_some(k)
    }
}

/// Unknown intensity values at the left endpoint of every window,
/// indexed `[entity][window]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryIntensities {
    values: Vec<Vec<f64>>,
}

impl BoundaryIntensities {
    pub fn new(windows: &WindowSet, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != windows.n() {
            return invalid("boundary intensities: entity count does not match windows");
        }
        for (m, vs) in values.iter().enumerate() {
            if vs.len() != windows.windows(m).len() {
                return invalid(format!("boundary intensities: entity {m} has the wrong window count"));
            }
            if let Some(v) = vs.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return invalid(format!("boundary intensities: entity {m} has invalid value {v}"));
            }
        }
        Ok(Self { values })
    }

    /// Every boundary set to the entity's background rate.
    pub fn at_background(params: &ModelParams, windows: &WindowSet) -> Self {
        let values = (0..windows.n())
            .map(|m| vec![params.u()[m]; windows.windows(m).len()])
            .collect();
        Self { values }
    }

    pub fn get(&self, m: usize, k: usize) -> f64 {
        self.values[m][k]
    }

    pub fn entity(&self, m: usize) -> &[f64] {
        &self.values[m]
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub(crate) fn from_raw(values: Vec<Vec<f64>>) -> Self {
        Self { values }
    }
}

fn check_entity(params: &ModelParams, n_data: usize, m: usize) -> Result<()> {
    if params.n() != n_data {
        return invalid(format!(
            "parameters describe {} entities but data has {n_data}",
            params.n()
        ));
    }
    if m >= n_data {
        return invalid(format!("entity index {m} out of range for {n_data} entities"));
    }
    Ok(())
}

/// Full-history CIF of entity `m` at time `t`, conditioned on events strictly before `t`.
pub fn cif_full(params: &ModelParams, events: &EventData, m: usize, t: f64) -> Result<f64> {
    check_entity(params, events.n(), m)?;
    if !(t > 0.0 && t <= events.horizon()) {
        return invalid(format!("t = {t} outside (0, {}]", events.horizon()));
    }
    let b = params.b()[m];
    let mut excitation = 0.0;
    for (n, ts) in events.all_times().iter().enumerate() {
        let end = ts.partition_point(|&s| s < t);
        let kernel: f64 = ts[..end].iter().map(|&s| b * (-b * (t - s)).exp()).sum();
        excitation += params.a(m, n) * kernel;
    }
    Ok(params.u()[m] + excitation)
}

/// Gapped CIF of entity `m` at `t`, which must lie in one of `m`'s windows.
///
/// Only observed events inside the current window `(c, t)` contribute; the
/// history before `c` is summarised by the boundary intensity.
pub fn cif_gapped(
    params: &ModelParams,
    observed: &EventData,
    windows: &WindowSet,
    bounds: &BoundaryIntensities,
    m: usize,
    t: f64,
) -> Result<f64> {
    check_entity(params, observed.n(), m)?;
    if windows.n() != observed.n() {
        return invalid("windows and events disagree on the number of entities");
    }
    let Some(k) = windows.locate(m, t) else {
        return invalid(format!("t = {t} is not inside any window of entity {m}"));
    };
    let c = windows.windows(m)[k].start;
    let u = params.u()[m];
    let b = params.b()[m];
    let boundary = bounds.get(m, k);
    let mut excitation = 0.0;
    for (n, ts) in observed.all_times().iter().enumerate() {
        let lo = ts.partition_point(|&s| s <= c);
        let hi = ts.partition_point(|&s| s < t);
        let kernel: f64 = ts[lo..hi.max(lo)].iter().map(|&s| b * (-b * (t - s)).exp()).sum();
        excitation += params.a(m, n) * kernel;
    }
    Ok(u + (boundary - u) * (-b * (t - c)).exp() + excitation)
}

/// Closed-form integral of the gapped CIF of entity `m` over its window `k`.
pub fn integrated_cif_window(
    params: &ModelParams,
    observed: &EventData,
    windows: &WindowSet,
    bounds: &BoundaryIntensities,
    m: usize,
    k: usize,
) -> Result<f64> {
    check_entity(params, observed.n(), m)?;
    if windows.n() != observed.n() {
        return invalid("windows and events disagree on the number of entities");
    }
    let Some(w) = windows.windows(m).get(k) else {
        return invalid(format!("window index {k} out of range for entity {m}"));
    };
    let (c, d) = (w.start, w.end);
    let u = params.u()[m];
    let b = params.b()[m];
    let boundary = bounds.get(m, k);
    let mut excitation = 0.0;
    for (n, ts) in observed.all_times().iter().enumerate() {
        let lo = ts.partition_point(|&s| s <= c);
        let hi = ts.partition_point(|&s| s <= d);
        let mass: f64 = ts[lo..hi.max(lo)].iter().map(|&s| -(-b * (d - s)).exp_m1()).sum();
        excitation += params.a(m, n) * mass;
    }
    let relax = -(-b * (d - c)).exp_m1() / b;
    Ok(u * (d - c) + (boundary - u) * relax + excitation)
}
