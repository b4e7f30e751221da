#ifndef HAWKES_GAPS_H
#define HAWKES_GAPS_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum HgStatus {
  HG_STATUS_OK = 0,
  HG_STATUS_INVALID_ARGUMENT = 1,
  HG_STATUS_NUMERICAL = 2,
  HG_STATUS_NULL_POINTER = 3,
  HG_STATUS_PANIC = 4,
} HgStatus;

typedef enum HgBoundary {
  /*
   Every boundary intensity equals the background rate.
   */
  HG_BOUNDARY_FIXED_AT_U = 0,
  /*
   `u <= boundary <= ratio * u`.
   */
  HG_BOUNDARY_BOX = 1,
} HgBoundary;

typedef struct HgEvents HgEvents;

typedef struct HgFit HgFit;

typedef struct HgParams HgParams;

typedef struct HgWindows HgWindows;

/*
 Estimator settings. Fill with [`hg_fit_options_default`] first.
 */
typedef struct HgFitOptions {
  /*
   Penalty weight; NaN selects `0.01 * (observed count) / N^2`.
   */
  double mu;
  enum HgBoundary boundary;
  /*
   Upper ratio for [`HgBoundary::Box`].
   */
  double ratio;
  double tol;
  size_t max_iter;
} HgFitOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread; empty after a success.
 The pointer stays valid until the next call into this library on the
 same thread.
 */
const char *hg_last_error(void);

/*
 # Safety
 `u` and `b` must point to `n` doubles and `a` to `n * n` (row-major).
 */
enum HgStatus hg_params_new(size_t n,
                            const double *u,
                            const double *a,
                            const double *b,
                            struct HgParams **out);

/*
 # Safety
 `params` must be null or a handle from this library, freed at most once.
 */
void hg_params_free(struct HgParams *params);

/*
 # Safety
 `params` must be a live handle.
 */
enum HgStatus hg_params_spectral_radius(const struct HgParams *params, double *out);

/*
 Simulates one path on `(0, horizon]` starting from `lambda(0) = u`.

 # Safety
 `params` must be a live handle.
 */
enum HgStatus hg_simulate(const struct HgParams *params,
                          double horizon,
                          uint64_t seed,
                          struct HgEvents **out);

/*
 Builds an event set from parallel `entity` / `time` arrays of length
 `len`. Times of each entity must be strictly increasing in `(0, horizon]`.

 # Safety
 `entity` and `time` must point to `len` elements each.
 */
enum HgStatus hg_events_new(size_t n,
                            double horizon,
                            const size_t *entity,
                            const double *time,
                            size_t len,
                            struct HgEvents **out);

/*
 # Safety
 `events` must be null or a handle from this library, freed at most once.
 */
void hg_events_free(struct HgEvents *events);

/*
 Borrowed view of entity `m`'s times, valid while `events` lives.

 # Safety
 `events` must be a live handle; `times` and `len` must be writable.
 */
enum HgStatus hg_events_times(const struct HgEvents *events,
                              size_t m,
                              const double **times,
                              size_t *len);

/*
 Draws observation windows for `n` entities, shared or per entity, and
 optionally replaces them with the time observed by all entities.

 # Safety
 `out` must be writable.
 */
enum HgStatus hg_windows_generate(double p,
                                  double tau_min,
                                  double tau_max,
                                  double horizon,
                                  size_t n,
                                  bool per_entity,
                                  bool intersect,
                                  uint64_t seed,
                                  struct HgWindows **out);

/*
 One window `(0, horizon]` per entity.

 # Safety
 `out` must be writable.
 */
enum HgStatus hg_windows_full(size_t n, double horizon, struct HgWindows **out);

/*
 # Safety
 `windows` must be null or a handle from this library, freed at most once.
 */
void hg_windows_free(struct HgWindows *windows);

/*
 Number of windows of entity `m`.

 # Safety
 `windows` must be a live handle.
 */
enum HgStatus hg_windows_count(const struct HgWindows *windows, size_t m, size_t *out);

/*
 Endpoints of window `k` of entity `m`.

 # Safety
 `windows` must be a live handle; `c` and `d` must be writable.
 */
enum HgStatus hg_windows_get(const struct HgWindows *windows,
                             size_t m,
                             size_t k,
                             double *c,
                             double *d);

/*
 Keeps the events that fall inside their entity's windows.

 # Safety
 `events` and `windows` must be live handles.
 */
enum HgStatus hg_restrict_events(const struct HgEvents *events,
                                 const struct HgWindows *windows,
                                 struct HgEvents **out);

/*
 # Safety
 `out` must be writable.
 */
enum HgStatus hg_fit_options_default(struct HgFitOptions *out);

/*
 Gap-aware fit of `observed` (events already restricted to `windows`).

 # Safety
 `observed` and `windows` must be live handles; `options` must point to an
 initialised [`HgFitOptions`].
 */
enum HgStatus hg_fit(const struct HgEvents *observed,
                     const struct HgWindows *windows,
                     const struct HgFitOptions *options,
                     struct HgFit **out);

/*
 Gap-blind fit treating `observed` as the complete record on
 `(0, horizon]`; the boundary setting in `options` is ignored.

 # Safety
 `observed` must be a live handle; `options` must point to an initialised
 [`HgFitOptions`].
 */
enum HgStatus hg_fit_mhp(const struct HgEvents *observed,
                         double horizon,
                         const struct HgFitOptions *options,
                         struct HgFit **out);

/*
 # Safety
 `result` must be null or a handle from this library, freed at most once.
 */
void hg_fit_free(struct HgFit *result);

/*
 Number of entities of a fit.

 # Safety
 `result` must be a live handle.
 */
enum HgStatus hg_fit_entities(const struct HgFit *result, size_t *out);

/*
 Copies the fitted parameters into caller buffers of `n`, `n * n`
 (row-major) and `n` doubles.

 # Safety
 `result` must be a live handle and the buffers large enough.
 */
enum HgStatus hg_fit_params(const struct HgFit *result, double *u, double *a, double *b);

/*
 Iteration count, convergence flag and final objective value.

 # Safety
 `result` must be a live handle; out-pointers may be null to skip a value.
 */
enum HgStatus hg_fit_summary(const struct HgFit *result,
                             size_t *iterations,
                             bool *converged,
                             double *objective);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HAWKES_GAPS_H */
