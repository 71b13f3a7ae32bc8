#ifndef STICKYFLOW_H
#define STICKYFLOW_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum SfStatus {
  SF_STATUS_OK = 0,
  SF_STATUS_NULL_POINTER = 1,
  SF_STATUS_INVALID_ARGUMENT = 2,
  // A test function outside the class an operation needs.
  SF_STATUS_FUNCTION_CLASS = 3,
  // Request exceeds a hard size cap.
  SF_STATUS_COST_GUARD = 4,
  SF_STATUS_CONFIG = 5,
  SF_STATUS_IO = 6,
  // A check suite ran but at least one check failed.
  SF_STATUS_CHECKS_FAILED = 7,
  SF_STATUS_PANIC = 8,
} SfStatus;

// Truncated chaos expansion handle.
typedef struct SfChaos SfChaos;

// Sticky transition kernel handle.
typedef struct SfKernel SfKernel;

// Brownian path handle.
typedef struct SfPath SfPath;

// Sticky path handle.
typedef struct SfStickyPath SfStickyPath;

// Test function handle.
typedef struct SfTestFunction SfTestFunction;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Last error message on this thread, NUL-terminated, or null if the last call succeeded.
// Valid until the next `sf_*` call on the same thread.
const char *sf_last_error_message(void);

// Library version, NUL-terminated, static.
const char *sf_version(void);

// `(a + b y + c y^2) e^{-y}` satisfying the sticky boundary condition at `theta`.
//
// # Safety
// `out` must be a valid pointer.
enum SfStatus sf_function_new_da(double a,
                                 double b,
                                 double c,
                                 double theta,
                                 struct SfTestFunction **out);

// `(a + b y + c y^2) e^{-rate y}`, with no boundary condition imposed.
//
// # Safety
// `out` must be a valid pointer.
enum SfStatus sf_function_new_exp_poly(double a,
                                       double b,
                                       double c,
                                       double rate,
                                       struct SfTestFunction **out);

// # Safety
// `f` must come from an `sf_function_new_*` call and not be used afterwards. Null is ignored.
void sf_function_free(struct SfTestFunction *f);

// `f(y)`.
//
// # Safety
// Pointers must be valid.
enum SfStatus sf_function_value(const struct SfTestFunction *f, double y, double *out);

// `G_f(y) = E f((y - T)^+)`, `T ~ Exp(2 theta)`.
//
// # Safety
// Pointers must be valid.
enum SfStatus sf_g_transform(const struct SfTestFunction *f, double theta, double y, double *out);

// `g_t(x)`; the atom of `P_t(x, .)` at zero is `g_t(x) / theta`.
//
// # Safety
// `out` must be a valid pointer.
enum SfStatus sf_g(double theta, double t, double x, double *out);

// # Safety
// `out` must be a valid pointer.
enum SfStatus sf_kernel_new(double theta, double t, struct SfKernel **out);

// # Safety
// `k` must come from [`sf_kernel_new`]. Null is ignored.
void sf_kernel_free(struct SfKernel *k);

// Density of `P_t(x, dy)` at `y > 0` and the atom at 0.
//
// # Safety
// Pointers must be valid.
enum SfStatus sf_kernel_density(const struct SfKernel *k,
                                double x,
                                double y,
                                double *density,
                                double *atom);

// `P_t f(x)`.
//
// # Safety
// Pointers must be valid.
enum SfStatus sf_kernel_apply(const struct SfKernel *k,
                              const struct SfTestFunction *f,
                              double x,
                              double *out);

// Brownian path with `n_steps` steps on `[0, t_end]`.
//
// # Safety
// `out` must be a valid pointer.
enum SfStatus sf_path_sample(double t_end, size_t n_steps, uint64_t seed, struct SfPath **out);

// Path from `n_steps + 1` explicit values on `[0, t_end]`; shifted to start at 0.
//
// # Safety
// `values` must point to `len` doubles; `out` must be valid.
enum SfStatus sf_path_from_values(double t_end,
                                  const double *values,
                                  size_t len,
                                  struct SfPath **out);

// # Safety
// `p` must come from an `sf_path_*` constructor. Null is ignored.
void sf_path_free(struct SfPath *p);

// Copies the path values into `buf` (capacity `len`); `written` receives the
// number of points even when the buffer is too small.
//
// # Safety
// `buf` must hold `len` doubles; `written` may be null.
enum SfStatus sf_path_values(const struct SfPath *p, double *buf, size_t len, size_t *written);

// `K_{s,t} f(x)` for the flow of kernels driven by the path, grid indices `s <= t`.
//
// # Safety
// Pointers must be valid.
enum SfStatus sf_flow_apply(const struct SfPath *p,
                            size_t s,
                            size_t t,
                            double x,
                            double theta,
                            const struct SfTestFunction *f,
                            double *out);

// Sticky Brownian motion from 0 on `n_steps` output steps over `[0, t_end]`,
// time-changed from a source with `n_steps * source_factor` steps.
//
// # Safety
// `out` must be a valid pointer.
enum SfStatus sf_sticky_simulate(double theta,
                                 double t_end,
                                 size_t n_steps,
                                 size_t source_factor,
                                 uint64_t seed,
                                 struct SfStickyPath **out);

// # Safety
// `p` must come from [`sf_sticky_simulate`]. Null is ignored.
void sf_sticky_free(struct SfStickyPath *p);

// Copies `X` into `buf`; see [`sf_path_values`] for the buffer protocol.
//
// # Safety
// `buf` must hold `len` doubles; `written` may be null.
enum SfStatus sf_sticky_values(const struct SfStickyPath *p,
                               double *buf,
                               size_t len,
                               size_t *written);

// Time spent at zero on `[0, t_horizon]`.
//
// # Safety
// Pointers must be valid.
enum SfStatus sf_sticky_occupation(const struct SfStickyPath *p, double t_horizon, double *out);

// Chaos coefficients of `E[f(X_t) | W]` up to order `n_max` (at most 3) on
// `n_steps` time steps and `space_nodes` nodes of `[0, x_max]`.
//
// # Safety
// Pointers must be valid.
enum SfStatus sf_chaos_new(double theta,
                           double t,
                           size_t n_steps,
                           size_t space_nodes,
                           double x_max,
                           const struct SfTestFunction *f,
                           size_t n_max,
                           struct SfChaos **out);

// # Safety
// `c` must come from [`sf_chaos_new`]. Null is ignored.
void sf_chaos_free(struct SfChaos *c);

// Evaluates the expansion on a path with the same number of steps.
// `terms` receives orders `0..=n_max` (capacity `len`); `truncation` their sum;
// `reference` the exact `G_f(W_t^+)` of the path.
//
// # Safety
// `terms` must hold `len` doubles; other pointers must be valid.
enum SfStatus sf_chaos_evaluate(const struct SfChaos *c,
                                const struct SfPath *p,
                                double *terms,
                                size_t len,
                                double *truncation,
                                double *reference);

// Runs a check suite by its subcommand name (`"warren-check"`, ...).
//
// `config` is `key = value` text applied over the suite defaults (may be null);
// `out_dir` overrides the output directory (may be null). `passed` receives 1
// if every check passed. Returns [`SfStatus::ChecksFailed`] when the suite ran
// but a check failed.
//
// # Safety
// String pointers must be NUL-terminated or null; `passed` may be null.
enum SfStatus sf_run_suite(const char *name,
                           const char *config,
                           const char *out_dir,
                           int32_t *passed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STICKYFLOW_H */
