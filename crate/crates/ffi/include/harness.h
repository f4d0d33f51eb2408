#ifndef HARNESS_H
#define HARNESS_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every fallible call.
 */
typedef enum {
  HARNESS_STATUS_OK = 0,
  HARNESS_STATUS_NULL_ARGUMENT = 1,
  HARNESS_STATUS_INVALID_UTF8 = 2,
  HARNESS_STATUS_CONFIG = 3,
  HARNESS_STATUS_VALIDATION = 4,
  HARNESS_STATUS_INFRA = 5,
  HARNESS_STATUS_ABORTED = 6,
  HARNESS_STATUS_IO = 7,
  HARNESS_STATUS_JSON = 8,
  HARNESS_STATUS_OUT_OF_RANGE = 9,
  HARNESS_STATUS_PANIC = 10,
} HarnessStatus;

/**
 * Parsed evaluation report.
 */
typedef struct HarnessReport HarnessReport;

/**
 * Loaded instance suite.
 */
typedef struct HarnessSuite HarnessSuite;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL after a
 * successful call. Free with `harness_string_free`.
 */
char *harness_last_error_message(void);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed already.
 */
void harness_string_free(char *s);

/**
 * Library version as a static NUL-terminated string.
 */
const char *harness_version(void);

/**
 * Unbiased pass@k for `c` successes among `n` samples.
 *
 * # Safety
 * `out_value` must be a valid pointer to a double.
 */
HarnessStatus harness_pass_at_k(uint32_t n, uint32_t c, uint32_t k, double *out_value);

/**
 * Whether a unified diff changes nothing.
 *
 * # Safety
 * `patch` must be a NUL-terminated string; `out_empty` a valid pointer.
 */
HarnessStatus harness_is_empty_patch(const char *patch, bool *out_empty);

/**
 * Parses a structured (JSON) report.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out_report` a valid pointer.
 */
HarnessStatus harness_report_parse(const char *json, HarnessReport **out_report);

/**
 * Renders a report as `structured`, `table`, or `plot-data`.
 *
 * # Safety
 * `report` must be a live handle; `format` a NUL-terminated string;
 * `out_text` a valid pointer.
 */
HarnessStatus harness_report_render(const HarnessReport *report,
                                    const char *format,
                                    char **out_text);

/**
 * Number of instances the report covers.
 *
 * # Safety
 * `report` must be a live handle or NULL.
 */
size_t harness_report_suite_size(const HarnessReport *report);

/**
 * Number of instances resolved by any attempt.
 *
 * # Safety
 * `report` must be a live handle or NULL.
 */
size_t harness_report_resolved(const HarnessReport *report);

/**
 * # Safety
 * `report` must come from `harness_report_parse` and not be used again.
 */
void harness_report_free(HarnessReport *report);

/**
 * Loads and validates a JSON-lines instance file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out_suite` a valid pointer.
 */
HarnessStatus harness_suite_load(const char *path, HarnessSuite **out_suite);

/**
 * # Safety
 * `suite` must be a live handle or NULL.
 */
size_t harness_suite_len(const HarnessSuite *suite);

/**
 * Id of the instance at `index`.
 *
 * # Safety
 * `suite` must be a live handle; `out_id` a valid pointer.
 */
HarnessStatus harness_suite_instance_id(const HarnessSuite *suite, size_t index, char **out_id);

/**
 * # Safety
 * `suite` must come from `harness_suite_load` and not be used again.
 */
void harness_suite_free(HarnessSuite *suite);

/**
 * Filters the attempts under `run_dir` at `stage` (1 or 2) and writes the
 * samples in `format` (`function_calling` or `xml`) to `output` as JSON
 * lines.
 *
 * # Safety
 * All strings must be NUL-terminated; `out_exported` a valid pointer.
 */
HarnessStatus harness_curate(const char *run_dir,
                             uint32_t stage,
                             const char *format,
                             const char *output,
                             size_t *out_exported);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HARNESS_H */
