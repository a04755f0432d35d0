#ifndef AVGSHAPE_H
#define AVGSHAPE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AvgshapeStatus {
  AVGSHAPE_STATUS_OK = 0,
  AVGSHAPE_STATUS_NULL_POINTER = 1,
  AVGSHAPE_STATUS_INVALID_UTF8 = 2,
  AVGSHAPE_STATUS_INVALID_ARGUMENT = 3,
  AVGSHAPE_STATUS_PARSE = 4,
  AVGSHAPE_STATUS_SOLVER = 5,
  AVGSHAPE_STATUS_UNKNOWN_ENV = 6,
  AVGSHAPE_STATUS_INSUFFICIENT_SEEDS = 7,
  AVGSHAPE_STATUS_IO = 8,
  AVGSHAPE_STATUS_BUFFER_TOO_SMALL = 9,
  AVGSHAPE_STATUS_PANIC = 10,
} AvgshapeStatus;

typedef struct AvgshapeAdvice AvgshapeAdvice;

typedef struct AvgshapeCurves AvgshapeCurves;

typedef struct AvgshapeMdp AvgshapeMdp;

typedef struct AvgshapeComparison {
  double diff;
  double lower;
  double upper;
  double df;
} AvgshapeComparison;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer
// stays valid until the next failing call on the same thread.
const char *avgshape_last_error(void);

// Library version as a static nul-terminated string.
const char *avgshape_version(void);

// Parses an MDP from its JSON file format.
//
// # Safety
// `json` must be a nul-terminated string and `out_mdp` a valid pointer.
enum AvgshapeStatus avgshape_mdp_from_json(const char *json, struct AvgshapeMdp **out_mdp);

// # Safety
// `mdp` must be null or a handle from [`avgshape_mdp_from_json`] not yet freed.
void avgshape_mdp_free(struct AvgshapeMdp *mdp);

// # Safety
// `mdp` must be a valid handle; `num_states` and `num_actions` valid pointers.
enum AvgshapeStatus avgshape_mdp_shape(const struct AvgshapeMdp *mdp,
                                       size_t *num_states,
                                       size_t *num_actions);

// Solves the MDP exactly. Writes the optimal gain and, when `policy` is not
// null, one action index per state into `policy[0..policy_len]`.
//
// # Safety
// `mdp` must be a valid handle, `gain` a valid pointer and `policy` either
// null or writable for `policy_len` elements.
enum AvgshapeStatus avgshape_solve(const struct AvgshapeMdp *mdp,
                                   double *gain,
                                   size_t *policy,
                                   size_t policy_len);

// Synthesises the reference advice of a built-in task such as `"gridworld"`.
//
// # Safety
// `env_name` must be a nul-terminated string and `out_advice` a valid pointer.
enum AvgshapeStatus avgshape_advice_new(const char *env_name, struct AvgshapeAdvice **out_advice);

// # Safety
// `advice` must be null or a live handle from [`avgshape_advice_new`].
void avgshape_advice_free(struct AvgshapeAdvice *advice);

// # Safety
// `advice` must be a valid handle; the outputs valid pointers.
enum AvgshapeStatus avgshape_advice_shape(const struct AvgshapeAdvice *advice,
                                          size_t *num_states,
                                          size_t *num_actions);

// Potential value `Φ(s, a)`.
//
// # Safety
// `advice` must be a valid handle and `value` a valid pointer.
enum AvgshapeStatus avgshape_advice_potential(const struct AvgshapeAdvice *advice,
                                              size_t state,
                                              size_t action,
                                              double *value);

// Whether the shield allows `action` in `state`.
//
// # Safety
// `advice` must be a valid handle and `allowed` a valid pointer.
enum AvgshapeStatus avgshape_advice_allows(const struct AvgshapeAdvice *advice,
                                           size_t state,
                                           size_t action,
                                           bool *allowed);

// Runs an experiment described by a TOML config string.
//
// # Safety
// `config_toml` must be a nul-terminated string and `out_curves` a valid pointer.
enum AvgshapeStatus avgshape_experiment_run(const char *config_toml,
                                            struct AvgshapeCurves **out_curves);

// # Safety
// `curves` must be null or a live handle from [`avgshape_experiment_run`].
void avgshape_curves_free(struct AvgshapeCurves *curves);

// Number of raw rows.
//
// # Safety
// `curves` must be a valid handle and `len` a valid pointer.
enum AvgshapeStatus avgshape_curves_len(const struct AvgshapeCurves *curves, size_t *len);

// Writes the raw rows as CSV to `path`.
//
// # Safety
// `curves` must be a valid handle and `path` a nul-terminated string.
enum AvgshapeStatus avgshape_curves_write_raw(const struct AvgshapeCurves *curves,
                                              const char *path);

// Welch comparison `a − b` of two methods at `step`.
//
// # Safety
// `curves` must be a valid handle, `method_a`/`method_b` nul-terminated
// strings and `result` a valid pointer.
enum AvgshapeStatus avgshape_curves_compare(const struct AvgshapeCurves *curves,
                                            uint64_t step,
                                            const char *method_a,
                                            const char *method_b,
                                            struct AvgshapeComparison *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AVGSHAPE_H */
