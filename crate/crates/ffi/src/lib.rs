//! C interface to `hawkes-gaps`.
//!
//! Objects are handed out as opaque pointers and released with the matching
//! `*_free` function. Every fallible call returns an [`HgStatus`]; on failure
//! a message is available from [`hg_last_error`] on the same thread. Results
//! are written through out-pointers only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use hawkes_gaps::gaps::{common_windows, generate_window_set, restrict_events, GapConfig, WindowLayout};
use hawkes_gaps::simulator::{simulate, SimConfig};
use hawkes_gaps::{fit, fit_mhp, BoundaryMode, EventData, FitConfig, FitResult, HawkesError, ModelParams, WindowSet};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HgStatus {
    Ok = 0,
    InvalidArgument = 1,
    Numerical = 2,
    NullPointer = 3,
    Panic = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HgBoundary {
    /// Every boundary intensity equals the background rate.
    FixedAtU = 0,
    /// `u <= boundary <= ratio * u`.
    Box = 1,
}

/// Estimator settings. Fill with [`hg_fit_options_default`] first.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct HgFitOptions {
    /// Penalty weight; NaN selects `0.01 * (observed count) / N^2`.
    pub mu: f64,
    pub boundary: HgBoundary,
    /// Upper ratio for [`HgBoundary::Box`].
    pub ratio: f64,
    pub tol: f64,
    pub max_iter: usize,
}

pub struct HgParams(ModelParams);
pub struct HgEvents(EventData);
pub struct HgWindows(WindowSet);
pub struct HgFit(FitResult);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(HgStatus, String);

impl From<HawkesError> for Failure {
    fn from(e: HawkesError) -> Self {
        let status = match e {
            HawkesError::InvalidArgument(_) => HgStatus::InvalidArgument,
            _ => HgStatus::Numerical,
        };
        Failure(status, e.to_string())
    }
}

fn null(name: &str) -> Failure {
    Failure(HgStatus::NullPointer, format!("{name} is null"))
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> HgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            HgStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            HgStatus::Panic
        }
    }
}

unsafe fn read<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn array<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn release<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn hg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `u` and `b` must point to `n` doubles and `a` to `n * n` (row-major).
#[no_mangle]
pub unsafe extern "C" fn hg_params_new(
    n: usize,
    u: *const f64,
    a: *const f64,
    b: *const f64,
    out: *mut *mut HgParams,
) -> HgStatus {
    guard(|| {
        let nn = n.checked_mul(n).ok_or_else(|| Failure(HgStatus::InvalidArgument, "n too large".into()))?;
        let params = ModelParams::from_flat(
            array(u, n, "u")?.to_vec(),
            array(a, nn, "a")?.to_vec(),
            array(b, n, "b")?.to_vec(),
        )?;
        emit(out, HgParams(params))
    })
}

/// # Safety
/// `params` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn hg_params_free(params: *mut HgParams) {
    release(params);
}

/// # Safety
/// `params` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hg_params_spectral_radius(params: *const HgParams, out: *mut f64) -> HgStatus {
    guard(|| {
        let p = read(params, "params")?;
        *out.as_mut().ok_or_else(|| null("out"))? = p.0.spectral_radius();
        Ok(())
    })
}

/// Simulates one path on `(0, horizon]` starting from `lambda(0) = u`.
///
/// # Safety
/// `params` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hg_simulate(
    params: *const HgParams,
    horizon: f64,
    seed: u64,
    out: *mut *mut HgEvents,
) -> HgStatus {
    guard(|| {
        let p = read(params, "params")?;
        let events = simulate(&SimConfig::new(p.0.clone(), horizon, seed))?;
        emit(out, HgEvents(events))
    })
}

/// Builds an event set from parallel `entity` / `time` arrays of length
/// `len`. Times of each entity must be strictly increasing in `(0, horizon]`.
///
/// # Safety
/// `entity` and `time` must point to `len` elements each.
#[no_mangle]
pub unsafe extern "C" fn hg_events_new(
    n: usize,
    horizon: f64,
    entity: *const usize,
    time: *const f64,
    len: usize,
    out: *mut *mut HgEvents,
) -> HgStatus {
    guard(|| {
        let ent = array(entity, len, "entity")?;
        let t = array(time, len, "time")?;
        let mut times = vec![Vec::new(); n];
        for (&m, &x) in ent.iter().zip(t) {
            let slot = times
                .get_mut(m)
                .ok_or_else(|| Failure(HgStatus::InvalidArgument, format!("entity {m} out of range for {n}")))?;
            slot.push(x);
        }
        emit(out, HgEvents(EventData::new(horizon, times)?))
    })
}

/// # Safety
/// `events` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn hg_events_free(events: *mut HgEvents) {
    release(events);
}

/// Borrowed view of entity `m`'s times, valid while `events` lives.
///
/// # Safety
/// `events` must be a live handle; `times` and `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hg_events_times(
    events: *const HgEvents,
    m: usize,
    times: *mut *const f64,
    len: *mut usize,
) -> HgStatus {
    guard(|| {
        let ev = read(events, "events")?;
        if m >= ev.0.n() {
            return Err(Failure(HgStatus::InvalidArgument, format!("entity {m} out of range for {}", ev.0.n())));
        }
        let t = ev.0.times(m);
        *times.as_mut().ok_or_else(|| null("times"))? = t.as_ptr();
        *len.as_mut().ok_or_else(|| null("len"))? = t.len();
        Ok(())
    })
}

/// Draws observation windows for `n` entities, shared or per entity, and
/// optionally replaces them with the time observed by all entities.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hg_windows_generate(
    p: f64,
    tau_min: f64,
    tau_max: f64,
    horizon: f64,
    n: usize,
    per_entity: bool,
    intersect: bool,
    seed: u64,
    out: *mut *mut HgWindows,
) -> HgStatus {
    guard(|| {
        let config = GapConfig { p, tau_min, tau_max, horizon, seed };
        let layout = if per_entity { WindowLayout::PerEntity } else { WindowLayout::Shared };
        let mut ws = generate_window_set(&config, n, layout)?;
        if intersect {
            ws = common_windows(&ws)?;
        }
        emit(out, HgWindows(ws))
    })
}

/// One window `(0, horizon]` per entity.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hg_windows_full(n: usize, horizon: f64, out: *mut *mut HgWindows) -> HgStatus {
    guard(|| emit(out, HgWindows(WindowSet::full(n, horizon)?)))
}

/// # Safety
/// `windows` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn hg_windows_free(windows: *mut HgWindows) {
    release(windows);
}

/// Number of windows of entity `m`.
///
/// # Safety
/// `windows` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hg_windows_count(windows: *const HgWindows, m: usize, out: *mut usize) -> HgStatus {
    guard(|| {
        let ws = read(windows, "windows")?;
        if m >= ws.0.n() {
            return Err(Failure(HgStatus::InvalidArgument, format!("entity {m} out of range for {}", ws.0.n())));
        }
        *out.as_mut().ok_or_else(|| null("out"))? = ws.0.windows(m).len();
        Ok(())
    })
}

/// Endpoints of window `k` of entity `m`.
///
/// # Safety
/// `windows` must be a live handle; `c` and `d` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hg_windows_get(
    windows: *const HgWindows,
    m: usize,
    k: usize,
    c: *mut f64,
    d: *mut f64,
) -> HgStatus {
    guard(|| {
        let ws = read(windows, "windows")?;
        let w = (m < ws.0.n())
            .then(|| ws.0.windows(m).get(k))
            .flatten()
            .ok_or_else(|| Failure(HgStatus::InvalidArgument, format!("no window {k} for entity {m}")))?;
        *c.as_mut().ok_or_else(|| null("c"))? = w.start;
        *d.as_mut().ok_or_else(|| null("d"))? = w.end;
        Ok(())
    })
}

/// Keeps the events that fall inside their entity's windows.
///
/// # Safety
/// `events` and `windows` must be live handles.
#[no_mangle]
pub unsafe extern "C" fn hg_restrict_events(
    events: *const HgEvents,
    windows: *const HgWindows,
    out: *mut *mut HgEvents,
) -> HgStatus {
    guard(|| {
        let ev = read(events, "events")?;
        let ws = read(windows, "windows")?;
        emit(out, HgEvents(restrict_events(&ev.0, &ws.0)?))
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hg_fit_options_default(out: *mut HgFitOptions) -> HgStatus {
    guard(|| {
        let d = FitConfig::default();
        let ratio = match d.boundary {
            BoundaryMode::Box(r) => r,
            BoundaryMode::FixedAtU => 20.0,
        };
        *out.as_mut().ok_or_else(|| null("out"))? =
            HgFitOptions { mu: f64::NAN, boundary: HgBoundary::Box, ratio, tol: d.tol, max_iter: d.max_iter };
        Ok(())
    })
}

fn fit_config(o: &HgFitOptions) -> FitConfig {
    FitConfig {
        mu: (!o.mu.is_nan()).then_some(o.mu),
        boundary: match o.boundary {
            HgBoundary::FixedAtU => BoundaryMode::FixedAtU,
            HgBoundary::Box => BoundaryMode::Box(o.ratio),
        },
        tol: o.tol,
        max_iter: o.max_iter,
        init: None,
    }
}

/// Gap-aware fit of `observed` (events already restricted to `windows`).
///
/// # Safety
/// `observed` and `windows` must be live handles; `options` must point to an
/// initialised [`HgFitOptions`].
#[no_mangle]
pub unsafe extern "C" fn hg_fit(
    observed: *const HgEvents,
    windows: *const HgWindows,
    options: *const HgFitOptions,
    out: *mut *mut HgFit,
) -> HgStatus {
    guard(|| {
        let ev = read(observed, "observed")?;
        let ws = read(windows, "windows")?;
        let config = fit_config(read(options, "options")?);
        emit(out, HgFit(fit(&ev.0, &ws.0, &config)?))
    })
}

/// Gap-blind fit treating `observed` as the complete record on
/// `(0, horizon]`; the boundary setting in `options` is ignored.
///
/// # Safety
/// `observed` must be a live handle; `options` must point to an initialised
/// [`HgFitOptions`].
#[no_mangle]
pub unsafe extern "C" fn hg_fit_mhp(
    observed: *const HgEvents,
    horizon: f64,
    options: *const HgFitOptions,
    out: *mut *mut HgFit,
) -> HgStatus {
    guard(|| {
        let ev = read(observed, "observed")?;
        let config = fit_config(read(options, "options")?);
        emit(out, HgFit(fit_mhp(&ev.0, horizon, &config)?))
    })
}

/// # Safety
/// `result` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn hg_fit_free(result: *mut HgFit) {
    release(result);
}

/// Number of entities of a fit.
///
/// # Safety
/// `result` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hg_fit_entities(result: *const HgFit, out: *mut usize) -> HgStatus {
    guard(|| {
        *out.as_mut().ok_or_else(|| null("out"))? = read(result, "result")?.0.params.n();
        Ok(())
    })
}

/// Copies the fitted parameters into caller buffers of `n`, `n * n`
/// (row-major) and `n` doubles.
///
/// # Safety
/// `result` must be a live handle and the buffers large enough.
#[no_mangle]
pub unsafe extern "C" fn hg_fit_params(result: *const HgFit, u: *mut f64, a: *mut f64, b: *mut f64) -> HgStatus {
    guard(|| {
        let p = &read(result, "result")?.0.params;
        let targets = [(p.u(), u, "u"), (p.a_flat(), a, "a"), (p.b(), b, "b")];
        if let Some((_, _, name)) = targets.iter().find(|(_, dst, _)| dst.is_null()) {
            return Err(null(name));
        }
        for (src, dst, _) in targets {
            ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
        }
        Ok(())
    })
}

/// Iteration count, convergence flag and final objective value.
///
/// # Safety
/// `result` must be a live handle; out-pointers may be null to skip a value.
#[no_mangle]
pub unsafe extern "C" fn hg_fit_summary(
    result: *const HgFit,
    iterations: *mut usize,
    converged: *mut bool,
    objective: *mut f64,
) -> HgStatus {
    guard(|| {
        let r = &read(result, "result")?.0;
        if let Some(x) = iterations.as_mut() {
            *x = r.iterations;
        }
        if let Some(x) = converged.as_mut() {
            *x = r.converged;
        }
        if let Some(x) = objective.as_mut() {
            *x = r.final_objective();
        }
        Ok(())
    })
}
