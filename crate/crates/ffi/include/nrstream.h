#ifndef NRSTREAM_H
#define NRSTREAM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NrsStatus {
  NRS_STATUS_OK = 0,
  NRS_STATUS_NULL_POINTER = 1,
  NRS_STATUS_INVALID_ARGUMENT = 2,
  NRS_STATUS_RESERVED_INDEX = 3,
  NRS_STATUS_UNSUPPORTED = 4,
  NRS_STATUS_CONFIG = 5,
  NRS_STATUS_IO = 6,
  NRS_STATUS_RUNTIME = 7,
  NRS_STATUS_PANIC = 8,
} NrsStatus;

/**
 * Simulation controller mode for [`nrs_simulate`].
 */
typedef enum NrsMode {
  NRS_MODE_ADAPTIVE = 0,
  NRS_MODE_FIXED = 1,
} NrsMode;

/**
 * A cell: one or more carriers sharing an MCS table.
 */
typedef struct NrsCell NrsCell;

/**
 * A rate controller over a quality ladder.
 */
typedef struct NrsController NrsController;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. Valid until the
 * next failing call on the same thread.
 */
const char *nrs_last_error(void);

/**
 * Library version as a static string.
 */
const char *nrs_version(void);

/**
 * Release a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void nrs_string_free(char *s);

/**
 * The 40 MHz / 30 kHz QAM256 testbed cell with a 0.7 TDD downlink share.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum NrsStatus nrs_cell_testbed(struct NrsCell **out);

/**
 * Parse a cell from JSON: `{"carriers": [...]}` with the scenario file's carrier fields.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum NrsStatus nrs_cell_from_json(const char *json, struct NrsCell **out);

/**
 * # Safety
 * `cell` must come from this library and not have been freed. NULL is ignored.
 */
void nrs_cell_free(struct NrsCell *cell);

/**
 * Peak downlink rate in Mbps at `mcs`.
 *
 * # Safety
 * `cell` must be a live handle and `out_mbps` a valid pointer.
 */
enum NrsStatus nrs_cell_rate_mbps(const struct NrsCell *cell, uint32_t mcs, double *out_mbps);

/**
 * Rate at `mcs` rendered with six decimals, e.g. `"158.796162"`.
 *
 * # Safety
 * `cell` must be a live handle and `out` a valid pointer.
 */
enum NrsStatus nrs_cell_rate_string(const struct NrsCell *cell, uint32_t mcs, char **out);

/**
 * Adaptive controller over a ladder. `ladder_json` may be NULL for the
 * default three-profile ladder; the controller starts in the top profile.
 *
 * # Safety
 * `ladder_json` must be NULL or NUL-terminated; `out` must be valid.
 */
enum NrsStatus nrs_controller_new(const char *ladder_json, struct NrsController **out);

/**
 * # Safety
 * `ctl` must come from this library and not have been freed. NULL is ignored.
 */
void nrs_controller_free(struct NrsController *ctl);

/**
 * Feed one estimate. `*out_switched` is set to whether the profile changed.
 *
 * # Safety
 * `ctl` must be a live handle; `out_switched` may be NULL.
 */
enum NrsStatus nrs_controller_step(struct NrsController *ctl,
                                   double estimate_mbps,
                                   double now_s,
                                   bool *out_switched);

/**
 * Name of the active profile; owned by the handle and valid until the next
 * step or free.
 *
 * # Safety
 * `ctl` must be a live handle.
 */
const char *nrs_controller_profile(const struct NrsController *ctl);

/**
 * Run a scenario file and return the metrics report as JSON.
 * `fixed_profile` may be NULL (the configured or top profile).
 *
 * # Safety
 * String arguments must be NULL or NUL-terminated; `out_report_json` must be valid.
 */
enum NrsStatus nrs_simulate(const char *config_path,
                            enum NrsMode mode,
                            const char *fixed_profile,
                            char **out_report_json);

/**
 * Freeze-time reductions in percent of a candidate against a baseline total,
 * plain and with `stall_count` stalls of `stall_ms` removed. Fails with
 * `NRS_STATUS_INVALID_ARGUMENT` when the baseline has no freeze time.
 *
 * # Safety
 * Out pointers must be valid.
 */
enum NrsStatus nrs_compare(double baseline_f_tot_ms,
                           double candidate_f_tot_ms,
                           double stall_ms,
                           uint32_t stall_count,
                           double *out_reduction_pct,
                           double *out_stall_free_reduction_pct);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NRSTREAM_H */
