#ifndef DSS_SAGE_H
#define DSS_SAGE_H

#pragma once

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes of every fallible call.
 */
typedef enum DssStatus {
  DSS_STATUS_OK = 0,
  /**
   * Null pointer, invalid UTF-8, index out of range or too small a buffer.
   */
  DSS_STATUS_INVALID_ARGUMENT = 1,
  DSS_STATUS_CONFIG = 2,
  DSS_STATUS_FORMAT = 3,
  DSS_STATUS_NUMERICAL = 4,
  DSS_STATUS_IO = 5,
  DSS_STATUS_PANIC = 6,
} DssStatus;

/**
 * A validated experiment configuration.
 */
typedef struct DssExperiment DssExperiment;

/**
 * The outcome of one estimator run.
 */
typedef struct DssResult DssResult;

/**
 * A CIR tensor of shape (n_tx, n_rx, samples).
 */
typedef struct DssTensor DssTensor;

/**
 * One estimated path in interface units. Distances are NaN when infinite.
 */
typedef struct DssPath {
  double gain;
  double gain_db;
  double delay_ns;
  double doa_az_deg;
  double doa_el_deg;
  double dod_az_deg;
  double dod_el_deg;
  double d_rx_m;
  double d_tx_m;
} DssPath;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the next failing call on the thread.
 */
const char *dss_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dss_version(void);

/**
 * Frees a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void dss_string_free(char *s);

/**
 * Parses and validates an experiment configuration from JSON text.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` a valid pointer.
 */
enum DssStatus dss_experiment_from_json(const char *json, struct DssExperiment **out);

/**
 * Loads an experiment configuration file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` a valid pointer.
 */
enum DssStatus dss_experiment_load(const char *path, struct DssExperiment **out);

/**
 * Releases an experiment. Null is ignored.
 *
 * # Safety
 * `e` must come from this library and not be freed twice.
 */
void dss_experiment_free(struct DssExperiment *e);

/**
 * Synthesizes the measured tensor of trial `trial`.
 *
 * # Safety
 * `e` must be a live experiment; `out` a valid pointer.
 */
enum DssStatus dss_synthesize(const struct DssExperiment *e, size_t trial, struct DssTensor **out);

/**
 * Reads a CIRT file and its sidecar.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` a valid pointer.
 */
enum DssStatus dss_tensor_load(const char *path, struct DssTensor **out);

/**
 * Writes a CIRT file and its sidecar.
 *
 * # Safety
 * `t` must be a live tensor; `path` a NUL-terminated string.
 */
enum DssStatus dss_tensor_save(const struct DssTensor *t, const char *path);

/**
 * Shape of a tensor.
 *
 * # Safety
 * `t` must be a live tensor; the out pointers valid.
 */
enum DssStatus dss_tensor_shape(const struct DssTensor *t,
                                size_t *n_tx,
                                size_t *n_rx,
                                size_t *samples);

/**
 * Copies the samples as interleaved (re, im) pairs in (n_tx, n_rx, sample) order.
 * `len` is the buffer length in doubles and must be at least twice the element count.
 *
 * # Safety
 * `t` must be a live tensor; `buf` must hold `len` doubles.
 */
enum DssStatus dss_tensor_copy(const struct DssTensor *t, double *buf, size_t len);

/**
 * Releases a tensor. Null is ignored.
 *
 * # Safety
 * `t` must come from this library and not be freed twice.
 */
void dss_tensor_free(struct DssTensor *t);

/**
 * Runs `estimator` ("dss-o-sage", "pwf-sage", "swf-sage" or "noise-elim") on `t`
 * with the experiment's sounding and estimator configuration.
 *
 * # Safety
 * `e` and `t` must be live handles; `estimator` a NUL-terminated string; `out` a valid pointer.
 */
enum DssStatus dss_estimate(const struct DssExperiment *e,
                            const struct DssTensor *t,
                            const char *estimator,
                            struct DssResult **out);

/**
 * Number of estimated paths; 0 for null.
 *
 * # Safety
 * `r` must be null or a live result.
 */
size_t dss_result_path_count(const struct DssResult *r);

/**
 * Copies path `index` (decreasing gain order for noise elimination, estimation order otherwise).
 *
 * # Safety
 * `r` must be a live result; `out` a valid pointer.
 */
enum DssStatus dss_result_path(const struct DssResult *r, size_t index, struct DssPath *out);

/**
 * Likelihood evaluations spent by the run; 0 for null.
 *
 * # Safety
 * `r` must be null or a live result.
 */
uint64_t dss_result_likelihood_evals(const struct DssResult *r);

/**
 * The result as JSON, in the CLI's result-file schema. Free with [`dss_string_free`].
 *
 * # Safety
 * `r` must be a live result; `out` a valid pointer.
 */
enum DssStatus dss_result_to_json(const struct DssResult *r, char **out);

/**
 * Releases a result. Null is ignored.
 *
 * # Safety
 * `r` must come from this library and not be freed twice.
 */
void dss_result_free(struct DssResult *r);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DSS_SAGE_H */
