#ifndef EDGEBOOT_H
#define EDGEBOOT_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every API call.
 */
enum EbStatus
#ifdef __cplusplus
  : int32_t
#endif // __cplusplus
 {
  EbOk = 0,
  EbInvalidArgument = 1,
  EbIoError = 2,
  EbConfigError = 3,
  EbComputeError = 4,
  EbPanic = 5,
};
#ifndef __cplusplus
typedef int32_t EbStatus;
#endif // __cplusplus

/**
 * Opaque sample-set handle.
 */
typedef struct EbSampleSet EbSampleSet;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the most recent error message for this thread into `buf` (always
 * NUL-terminated when `cap > 0`) and return the full message length.
 */
uintptr_t eb_last_error(char *buf, uintptr_t cap);

/**
 * Parse a sample set from CSV text (`sample_id,x1,..,xd` header).
 */
EbStatus eb_sample_set_from_csv_text(const char *text, struct EbSampleSet **out);

/**
 * Read a sample set from a CSV file.
 */
EbStatus eb_sample_set_from_csv_file(const char *path, struct EbSampleSet **out);

/**
 * Release a sample-set handle. Passing NULL is a no-op.
 */
void eb_sample_set_free(struct EbSampleSet *handle);

/**
 * Report the shape of a sample set.
 */
EbStatus eb_sample_set_info(const struct EbSampleSet *handle,
                            uintptr_t *k,
                            uintptr_t *d,
                            uintptr_t *n_total);

/**
 * Monte Carlo bootstrap estimate of `P(T* <= threshold | sample)` for a
 * scalar catalog statistic, with standard error. Pass NaN for `param` to
 * use the statistic's default parameter.
 */
EbStatus eb_bootstrap_probability(const struct EbSampleSet *handle,
                                  const char *statistic,
                                  double param,
                                  uint64_t reps,
                                  uint64_t seed,
                                  double threshold,
                                  double *out_p,
                                  double *out_se);

/**
 * Expansion estimate of the same probability at expansion order `nu`,
 * evaluated by deterministic quadrature.
 */
EbStatus eb_expansion_probability(const struct EbSampleSet *handle,
                                  const char *statistic,
                                  double param,
                                  uint32_t nu,
                                  double threshold,
                                  double *out_p);

/**
 * Run a full experiment from a config file. `out_exit_code` receives the
 * CLI exit convention: 0 success, 2 config error, 3 oracle failure,
 * 4 threshold failure.
 */
EbStatus eb_run_experiment(const char *config_path, int32_t *out_exit_code);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* EDGEBOOT_H */
