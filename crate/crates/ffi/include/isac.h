#ifndef ISAC_H
#define ISAC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum IsacStatus {
  ISAC_STATUS_OK = 0,
  ISAC_STATUS_NULL_POINTER = 1,
  ISAC_STATUS_INVALID_CONFIG = 2,
  ISAC_STATUS_IO = 3,
  ISAC_STATUS_FORMAT = 4,
  ISAC_STATUS_SHAPE = 5,
  ISAC_STATUS_NUMERIC = 6,
  ISAC_STATUS_INVALID_UTF8 = 7,
  ISAC_STATUS_PANIC = 8,
} IsacStatus;

typedef enum IsacModelKind {
  ISAC_MODEL_KIND_HCL = 0,
  ISAC_MODEL_KIND_NAIVE = 1,
} IsacModelKind;

/**
 * Opaque simulation configuration.
 */
typedef struct IsacConfig IsacConfig;

/**
 * Opaque trained beamformer (HCL-Net or naive DL).
 */
typedef struct IsacModel IsacModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *isac_version(void);

/**
 * Message of the last failed call on this thread, or an empty string.
 * Valid until the next library call on the same thread.
 */
const char *isac_last_error(void);

/**
 * New configuration with default values. Never null.
 */
struct IsacConfig *isac_config_new(void);

/**
 * Loads a `key = value` configuration file into a new handle.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum IsacStatus isac_config_load(const char *path, struct IsacConfig **out);

/**
 * Sets one key. The configuration is revalidated; on failure it is left
 * unchanged.
 *
 * # Safety
 * `cfg` must come from this library; `key` and `value` NUL-terminated.
 */
enum IsacStatus isac_config_set(struct IsacConfig *cfg, const char *key, const char *value);

/**
 * # Safety
 * `cfg` must come from this library or be null; it must not be used after.
 */
void isac_config_free(struct IsacConfig *cfg);

/**
 * Closed-form CRLBs of angle (rad²) and distance (m²) for the aligned beam
 * `√power · a(theta)`.
 *
 * # Safety
 * `cfg` must be valid; the output pointers writable.
 */
enum IsacStatus isac_crlb(const struct IsacConfig *cfg,
                          double theta,
                          double dist,
                          double power,
                          double *out_crlb_theta,
                          double *out_crlb_d);

/**
 * Loads a model file written by `isac train`.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` writable.
 */
enum IsacStatus isac_model_load(const char *path, struct IsacModel **out);

/**
 * # Safety
 * `model` must be a valid handle.
 */
enum IsacStatus isac_model_kind(const struct IsacModel *model, enum IsacModelKind *out);

/**
 * Number of doubles a prediction writes: `K · M · 2`.
 *
 * # Safety
 * `model` must be a valid handle.
 */
enum IsacStatus isac_model_output_len(const struct IsacModel *model, size_t *out);

/**
 * Predicts the next-slot beamforming matrix.
 *
 * `history` holds `tau · K · M · 2` doubles, row-major over
 * `[slot][vehicle][antenna][re, im]`, oldest slot first. `est_thetas`
 * and `est_dists` hold `tau · K` estimates each, same slot order; the
 * HCL-Net ignores them and they may be null with `est_len = 0`. `out`
 * receives `K · M · 2` doubles as `[vehicle][antenna][re, im]`. With
 * `project` nonzero the beams are scaled onto the power budget of `cfg`.
 *
 * # Safety
 * All pointers must be valid for the given lengths.
 */
enum IsacStatus isac_model_predict(const struct IsacModel *model,
                                   const struct IsacConfig *cfg,
                                   const double *history,
                                   size_t history_len,
                                   const double *est_thetas,
                                   const double *est_dists,
                                   size_t est_len,
                                   int32_t project,
                                   double *out,
                                   size_t out_len);

/**
 * # Safety
 * `model` must come from this library or be null; it must not be used after.
 */
void isac_model_free(struct IsacModel *model);

/**
 * Monte-Carlo mean sum-rates (bits/s/Hz) over `realizations` episodes.
 * `model` may be null, in which case `out_model_rate` is left untouched
 * and may be null too.
 *
 * # Safety
 * `cfg` must be valid; non-null pointers must be valid.
 */
enum IsacStatus isac_eval_rates(const struct IsacConfig *cfg,
                                const struct IsacModel *model,
                                size_t realizations,
                                uint64_t seed,
                                double *out_genie_rate,
                                double *out_model_rate,
                                double *out_random_rate);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ISAC_H */
