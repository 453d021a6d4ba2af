#ifndef TSF_H
#define TSF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum TsfStatus {
  TSF_STATUS_OK = 0,
  TSF_STATUS_NULL_POINTER = 1,
  TSF_STATUS_INVALID_UTF8 = 2,
  TSF_STATUS_INVALID_ARGUMENT = 3,
  TSF_STATUS_DATASET_ERROR = 4,
  TSF_STATUS_PATCH_ERROR = 5,
  TSF_STATUS_NEIGHBOR_ERROR = 6,
  TSF_STATUS_PROMPT_ERROR = 7,
  TSF_STATUS_PARSE_ERROR = 8,
  TSF_STATUS_GATEWAY_ERROR = 9,
  TSF_STATUS_EVAL_ERROR = 10,
  TSF_STATUS_CONFIG_ERROR = 11,
  TSF_STATUS_IO_ERROR = 12,
  TSF_STATUS_PANIC = 13,
} TsfStatus;

/**
 * An assembled prompt bundle.
 */
typedef struct TsfBundle TsfBundle;

/**
 * A loaded dataset.
 */
typedef struct TsfDataset TsfDataset;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next call into this library on the same thread.
 */
const char *tsf_last_error_message(void);

/**
 * Releases a string returned through a `char **` out-parameter.
 *
 * # Safety
 * `s` must be null or a pointer obtained from this library and not yet freed.
 */
void tsf_string_free(char *s);

/**
 * Renders a value with at most `max_decimals` fractional digits.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one `char *`.
 */
enum TsfStatus tsf_format_value(double x, size_t max_decimals, char **out);

/**
 * Ten-minute slot of the day for a clock time.
 *
 * # Safety
 * `out` must be a valid pointer to one `uint32_t`.
 */
enum TsfStatus tsf_slot_index(uint32_t hour, uint32_t minute, uint32_t *out);

/**
 * Mean squared error of two arrays of length `len`.
 *
 * # Safety
 * `pred` and `truth` must point to `len` readable doubles; `out` to one double.
 */
enum TsfStatus tsf_mse(const double *pred, const double *truth, size_t len, double *out);

/**
 * Mean absolute error of two arrays of length `len`.
 *
 * # Safety
 * `pred` and `truth` must point to `len` readable doubles; `out` to one double.
 */
enum TsfStatus tsf_mae(const double *pred, const double *truth, size_t len, double *out);

/**
 * Extracts exactly `horizon` forecast values from a model response into
 * `out_values`.
 *
 * # Safety
 * `text` must be a nul-terminated string; `out_values` must have room for
 * `horizon` doubles.
 */
enum TsfStatus tsf_parse_prediction(const char *text, size_t horizon, double *out_values);

/**
 * Loads a CSV dataset. `schema_path` may be null for the default layout.
 *
 * # Safety
 * `path` must be a nul-terminated string, `schema_path` null or one, and
 * `out` a valid pointer to one `TsfDataset *`.
 */
enum TsfStatus tsf_dataset_load(const char *path, const char *schema_path, struct TsfDataset **out);

/**
 * Number of series in the dataset; zero for a null handle.
 *
 * # Safety
 * `dataset` must be null or a live handle from [`tsf_dataset_load`].
 */
size_t tsf_dataset_feature_count(const struct TsfDataset *dataset);

/**
 * Number of observations per series; zero for a null handle.
 *
 * # Safety
 * `dataset` must be null or a live handle from [`tsf_dataset_load`].
 */
size_t tsf_dataset_length(const struct TsfDataset *dataset);

/**
 * # Safety
 * `dataset` must be null or a handle from [`tsf_dataset_load`] not yet freed.
 */
void tsf_dataset_free(struct TsfDataset *dataset);

/**
 * Assembles the prompt for the window of series `feature_index` whose
 * context starts at `context_start`. Neighbor strategies retrieve `k`
 * neighbors (zero selects the default of 5) from the whole dataset.
 *
 * # Safety
 * `dataset` must be a live handle, `strategy` a nul-terminated strategy
 * name, and `out` a valid pointer to one `TsfBundle *`.
 */
enum TsfStatus tsf_bundle_assemble(const struct TsfDataset *dataset,
                                   size_t feature_index,
                                   const char *strategy,
                                   size_t context_start,
                                   size_t context_len,
                                   size_t horizon,
                                   size_t k,
                                   struct TsfBundle **out);

/**
 * System message of a bundle, borrowed from the handle; null for a null handle.
 *
 * # Safety
 * `bundle` must be null or a live handle.
 */
const char *tsf_bundle_system(const struct TsfBundle *bundle);

/**
 * User message of a bundle, borrowed from the handle; null for a null handle.
 *
 * # Safety
 * `bundle` must be null or a live handle.
 */
const char *tsf_bundle_user(const struct TsfBundle *bundle);

/**
 * Content hash of a bundle as lowercase hex.
 *
 * # Safety
 * `bundle` must be a live handle and `out` a valid pointer to one `char *`.
 */
enum TsfStatus tsf_bundle_hash(const struct TsfBundle *bundle, char **out);

/**
 * # Safety
 * `bundle` must be null or a handle from [`tsf_bundle_assemble`] not yet freed.
 */
void tsf_bundle_free(struct TsfBundle *bundle);

/**
 * Runs a TOML run configuration and returns the reports as JSON. Window
 * failures do not fail the call; they are absent from the reports.
 *
 * # Safety
 * `config_toml` must be a nul-terminated string and `out_json` a valid
 * pointer to one `char *`.
 */
enum TsfStatus tsf_run_config(const char *config_toml, char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TSF_H */
