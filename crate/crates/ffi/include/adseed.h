/* C interface to the adseed two-stage adaptive seeding library. */

#ifndef ADSEED_H
#define ADSEED_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every API call. Values above OK describe what went wrong.
 */
typedef enum AdseedStatus {
  ADSEED_STATUS_OK = 0,
  /**
   * A defect inside the library (caught panic).
   */
  ADSEED_STATUS_INTERNAL = 1,
  /**
   * Malformed or inconsistent input.
   */
  ADSEED_STATUS_INPUT = 2,
  /**
   * An enumeration exceeded its configured cap.
   */
  ADSEED_STATUS_CAP_EXCEEDED = 3,
  /**
   * The policy violates the budget or another feasibility constraint.
   */
  ADSEED_STATUS_INFEASIBLE = 4,
  /**
   * A required pointer argument was null.
   */
  ADSEED_STATUS_NULL_POINTER = 5,
  /**
   * A string argument was not valid UTF-8.
   */
  ADSEED_STATUS_INVALID_UTF8 = 6,
} AdseedStatus;

/**
 * Opaque handle to a parsed and validated instance.
 */
typedef struct AdseedInstance AdseedInstance;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parses an instance from JSON and returns a handle through `out`.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be a valid pointer.
 * The handle must be released with [`adseed_instance_free`].
 */
enum AdseedStatus adseed_instance_from_json(const char *json, struct AdseedInstance **out);

/**
 * Releases a handle returned by [`adseed_instance_from_json`]. Null is a
 * no-op.
 *
 * # Safety
 * `handle` must be null or a pointer obtained from
 * [`adseed_instance_from_json`] that has not been freed already.
 */
void adseed_instance_free(struct AdseedInstance *handle);

/**
 * Reports the instance's sizes and budget.
 *
 * # Safety
 * `handle` must be a live instance handle; the out-pointers must be valid
 * or null (null fields are skipped).
 */
enum AdseedStatus adseed_instance_counts(const struct AdseedInstance *handle,
                                         uint64_t *n_x,
                                         uint64_t *n_ground,
                                         uint64_t *budget);

/**
 * Runs a solver. `options_json` is an object with fields `alg`
 * ("na-greedy", "na-greedy+crs", "la-greedy", or "bruteforce") and
 * optional `epsilon`, `samples`, `seed`. The result document (value,
 * error bars, policy) is returned through `out_json`.
 *
 * # Safety
 * `handle` must be a live instance handle, `options_json` a
 * NUL-terminated string, and `out_json` a valid pointer. The returned
 * string is released with [`adseed_string_free`].
 */
enum AdseedStatus adseed_solve_json(const struct AdseedInstance *handle,
                                    const char *options_json,
                                    char **out_json);

/**
 * Scores a policy JSON document against the instance. `samples` forces
 * Monte Carlo with that many samples; 0 selects exact evaluation when
 * possible. Infeasible policies (for example, over budget) fail with
 * `ADSEED_STATUS_INFEASIBLE`.
 *
 * # Safety
 * `handle` must be a live instance handle, `policy_json` a NUL-terminated
 * string, `out_json` a valid pointer. The returned string is released
 * with [`adseed_string_free`].
 */
enum AdseedStatus adseed_eval_policy_json(const struct AdseedInstance *handle,
                                          const char *policy_json,
                                          uint64_t samples,
                                          uint64_t seed,
                                          char **out_json);

/**
 * Computes the exact adaptive and non-adaptive optima of a small instance
 * and returns the report as JSON.
 *
 * # Safety
 * `handle` must be a live instance handle and `out_json` a valid pointer.
 * The returned string is released with [`adseed_string_free`].
 */
enum AdseedStatus adseed_oracle_json(const struct AdseedInstance *handle, char **out_json);

/**
 * Closed-form gap reference values. `family` is "na" (param = delta) or
 * "la" (param = integer m).
 *
 * # Safety
 * `family` must be a NUL-terminated string and `out_json` a valid
 * pointer. The returned string is released with [`adseed_string_free`].
 */
enum AdseedStatus adseed_gap_reference(const char *family, double param, char **out_json);

/**
 * Releases a string returned by this library. Null is a no-op.
 *
 * # Safety
 * `s` must be null or a pointer obtained from an `out_json` parameter of
 * this library that has not been freed already.
 */
void adseed_string_free(char *s);

/**
 * Message for the most recent failure on the calling thread. The pointer
 * stays valid until the next failing call on the same thread. Empty when
 * nothing failed yet.
 */
const char *adseed_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ADSEED_H */
