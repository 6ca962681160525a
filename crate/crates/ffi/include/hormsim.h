#ifndef HORMSIM_H
#define HORMSIM_H

/* Generated by cbindgen from hormsim-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes for every fallible call.
 */
typedef enum HsStatus {
  HS_STATUS_OK = 0,
  HS_STATUS_NULL_POINTER = 1,
  HS_STATUS_INVALID_UTF8 = 2,
  HS_STATUS_INVALID_ARGUMENT = 3,
  HS_STATUS_RUN_FAILED = 4,
  HS_STATUS_IO_FAILED = 5,
  HS_STATUS_PANICKED = 6,
} HsStatus;

/**
 * Finished-run handle holding the metrics log and derived summary.
 */
typedef struct HsResult HsResult;

/**
 * Scenario handle. Opaque; construct, adjust, run, free.
 */
typedef struct HsScenario HsScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread, or null.
 * Valid until the next failing call on the same thread.
 */
const char *hs_last_error(void);

/**
 * Library version as a static string; do not free.
 */
const char *hs_version(void);

/**
 * Frees a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must have been returned by a `hormsim_ffi` function and not yet freed.
 */
void hs_string_free(char *s);

/**
 * New scenario with default settings (the 50-node setup).
 */
struct HsScenario *hs_scenario_new(void);

/**
 * Parses a scenario from its flat key-value text; null on error.
 *
 * # Safety
 * `text` must be a valid NUL-terminated string.
 */
struct HsScenario *hs_scenario_parse(const char *text);

/**
 * Loads a scenario file; null on error.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string.
 */
struct HsScenario *hs_scenario_load(const char *path);

/**
 * Applies one `key = value` override.
 *
 * # Safety
 * `scenario` must be a live handle; `key`/`value` valid NUL-terminated strings.
 */
enum HsStatus hs_scenario_set(struct HsScenario *scenario, const char *key, const char *value);

/**
 * Scenario serialized back to its file format; free with hs_string_free.
 *
 * # Safety
 * `scenario` must be a live handle.
 */
char *hs_scenario_to_text(const struct HsScenario *scenario);

/**
 * # Safety
 * `scenario` must be a live handle or null; it is invalid afterwards.
 */
void hs_scenario_free(struct HsScenario *scenario);

/**
 * Runs the scenario to completion; null on error.
 *
 * # Safety
 * `scenario` must be a live handle (it stays valid and reusable).
 */
struct HsResult *hs_run(const struct HsScenario *scenario);

/**
 * Keyword slots fulfilled within their deadline.
 *
 * # Safety
 * `result` must be a live handle.
 */
uint64_t hs_result_fulfilled_slots(const struct HsResult *result);

/**
 * Keyword slots whose deadline was missed.
 *
 * # Safety
 * `result` must be a live handle.
 */
uint64_t hs_result_missed_slots(const struct HsResult *result);

/**
 * Missed slots over terminal slots.
 *
 * # Safety
 * `result` must be a live handle.
 */
double hs_result_missed_rate(const struct HsResult *result);

/**
 * Mean slot delay in seconds (missed slots at their maximum delay).
 *
 * # Safety
 * `result` must be a live handle.
 */
double hs_result_mean_delay_s(const struct HsResult *result);

/**
 * Median slot delay in seconds.
 *
 * # Safety
 * `result` must be a live handle.
 */
double hs_result_median_delay_s(const struct HsResult *result);

/**
 * Mean per-unit utilization (presentations over replica-time).
 *
 * # Safety
 * `result` must be a live handle.
 */
double hs_result_mean_utilization(const struct HsResult *result);

/**
 * Clean-up sweeps that could not reach the trigger level.
 *
 * # Safety
 * `result` must be a live handle.
 */
uint64_t hs_result_cleanup_failures(const struct HsResult *result);

/**
 * Full summary as a JSON document; free with hs_string_free.
 *
 * # Safety
 * `result` must be a live handle.
 */
char *hs_result_summary_json(const struct HsResult *result);

/**
 * Writes delays.csv, cdf.csv, cleanup.csv, slots.csv and summary.json
 * into `dir` (created if missing).
 *
 * # Safety
 * `result` must be a live handle; `dir` a valid NUL-terminated string.
 */
enum HsStatus hs_result_write_outputs(const struct HsResult *result, const char *dir);

/**
 * # Safety
 * `result` must be a live handle or null; it is invalid afterwards.
 */
void hs_result_free(struct HsResult *result);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* HORMSIM_H */
