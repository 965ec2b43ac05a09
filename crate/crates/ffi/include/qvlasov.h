#ifndef QVLASOV_H
#define QVLASOV_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum QvStatus {
  QV_STATUS_OK = 0,
  QV_STATUS_NULL_POINTER = 1,
  QV_STATUS_INVALID_ARGUMENT = 2,
  QV_STATUS_DOMAIN = 3,
  QV_STATUS_IO = 4,
  QV_STATUS_FORMAT = 5,
  QV_STATUS_CONVERGENCE = 6,
  QV_STATUS_PANIC = 7,
} QvStatus;

typedef enum QvBackend {
  QV_BACKEND_DENSE = 0,
  QV_BACKEND_KRYLOV = 1,
} QvBackend;

typedef enum QvScheme {
  QV_SCHEME_SAMPLING_MLE = 0,
  QV_SCHEME_ITERATIVE = 1,
} QvScheme;

typedef struct QvForceField QvForceField;

typedef struct QvGrid QvGrid;

typedef struct QvState QvState;

// Inputs of the query-count formulas.
typedef struct QvResourceParams {
  size_t dim;
  size_t ngr;
  size_t nt;
  double tmax;
  double box_length;
  double vmax;
  double fmax;
  double eps;
  double delta;
  double c;
} QvResourceParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null if none.
// The pointer stays valid until the next failing call on the same thread.
const char *qv_last_error_message(void);

// Library version as a static nul-terminated string.
const char *qv_version(void);

// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum QvStatus qv_grid_new(size_t dim,
                          size_t ngr,
                          double box_length,
                          double vmax,
                          struct QvGrid **out);

// # Safety
// `grid` must be null or a handle from `qv_grid_new` not yet freed.
void qv_grid_free(struct QvGrid *grid);

// Total number of phase-space grid points `n_gr^(2d)`.
//
// # Safety
// `grid` must be a live handle; `out` must be writable.
enum QvStatus qv_grid_len(const struct QvGrid *grid, size_t *out);

// # Safety
// `multi` must point to `n` readable values; `out` must be writable.
enum QvStatus qv_grid_flatten(const struct QvGrid *grid,
                              const size_t *multi,
                              size_t n,
                              size_t *out);

// Writes the `2d` axis indices of `flat` into `out[0..n]`.
//
// # Safety
// `out` must point to `n` writable values.
enum QvStatus qv_grid_unflatten(const struct QvGrid *grid, size_t flat, size_t *out, size_t n);

// `F = A sin(K x)` along the first axis, repeated over `nt` slices.
//
// # Safety
// `grid` must be a live handle; `out` must be writable.
enum QvStatus qv_force_analytic(const struct QvGrid *grid,
                                double amplitude,
                                double wavenumber,
                                size_t nt,
                                struct QvForceField **out);

// Loads a single-realization VQFF1 file.
//
// # Safety
// `path` must be a nul-terminated UTF-8 string.
enum QvStatus qv_force_load(const struct QvGrid *grid, const char *path, struct QvForceField **out);

// # Safety
// `ff` must be null or a live force-field handle.
void qv_force_free(struct QvForceField *ff);

// # Safety
// `ff` must be a live handle; `out` must be writable.
enum QvStatus qv_force_fmax(const struct QvForceField *ff, double *out);

// # Safety
// `grid` must be a live handle; `out` must be writable.
enum QvStatus qv_state_maxwell(const struct QvGrid *grid, double sigma_v, struct QvState **out);

// # Safety
// `values` must point to `n` readable doubles.
enum QvStatus qv_state_from_real(const double *values, size_t n, struct QvState **out);

// # Safety
// `state` must be null or a live state handle.
void qv_state_free(struct QvState *state);

// # Safety
// `state` must be a live handle; `out` must be writable.
enum QvStatus qv_state_len(const struct QvState *state, size_t *out);

// Copies the real parts into `out[0..n]`; `n` must equal the state length.
//
// # Safety
// `out` must point to `n` writable doubles.
enum QvStatus qv_state_copy_real(const struct QvState *state, double *out, size_t n);

// # Safety
// `state` must be a live handle; `out` must be writable.
enum QvStatus qv_state_norm(const struct QvState *state, double *out);

// Evolves `state` to `tmax` over all slices of `ff` into a new handle.
//
// # Safety
// All handles must be live; `out` must be writable.
enum QvStatus qv_evolve(const struct QvState *state,
                        const struct QvGrid *grid,
                        const struct QvForceField *ff,
                        double tmax,
                        enum QvBackend backend,
                        double tol,
                        struct QvState **out);

// # Safety
// `state` must be a live handle; `out` must be writable.
enum QvStatus qv_compute_c(const struct QvState *state, double *out);

// Writes `|δ̃_k|²` for every spatial mode into `out[0..n]`, `n = n_gr^d`.
//
// # Safety
// `out` must point to `n` writable doubles.
enum QvStatus qv_power_spectrum(const struct QvState *state,
                                const struct QvGrid *grid,
                                double *out,
                                size_t n);

// Counts oracle mismatches over every time slice of `ff`.
//
// # Safety
// Handles must be live; `mismatches` must be writable.
enum QvStatus qv_verify_oracles(const struct QvGrid *grid,
                                const struct QvForceField *ff,
                                size_t *mismatches);

// `max{V/L, F_max/(2V)} · n_gr/2`.
//
// # Safety
// Handles must be live; `out` must be writable.
enum QvStatus qv_hmax_bound(const struct QvGrid *grid, const struct QvForceField *ff, double *out);

// Emulated amplitude estimation of `a`.
//
// # Safety
// `estimate` and `oracle_calls` must be writable.
enum QvStatus qv_qae_estimate(double a,
                              double eps,
                              double delta,
                              uint64_t seed,
                              enum QvScheme scheme,
                              double *estimate,
                              uint64_t *oracle_calls);

// Unit-constant query count for one evolved-state preparation.
//
// # Safety
// `params` must be readable; `out` must be writable.
enum QvStatus qv_theorem1_queries(const struct QvResourceParams *params, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QVLASOV_H */
