#ifndef WAVEBIF_H
#define WAVEBIF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum WavebifStatus {
  WAVEBIF_STATUS_OK = 0,
  WAVEBIF_STATUS_NULL_POINTER = 1,
  WAVEBIF_STATUS_INVALID_CONFIG = 2,
  WAVEBIF_STATUS_INVALID_ARGUMENT = 3,
  WAVEBIF_STATUS_NUMERIC = 4,
  WAVEBIF_STATUS_BUFFER_TOO_SMALL = 5,
  WAVEBIF_STATUS_PANIC = 6,
} WavebifStatus;

/**
 * Parameters, grid and relative circulation of one configuration.
 */
typedef struct WavebifModel WavebifModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *wavebif_last_error(void);

/**
 * Builds a model from a JSON run config (the `--config` document of the CLI).
 *
 * # Safety
 * `config_json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum WavebifStatus wavebif_model_new(const char *config_json, struct WavebifModel **out);

/**
 * Releases a model; null is ignored.
 *
 * # Safety
 * `model` must come from `wavebif_model_new` and not be used afterwards.
 */
void wavebif_model_free(struct WavebifModel *model);

/**
 * Number of p-nodes (bed to lid, interface once).
 *
 * # Safety
 * `model` must be a live handle or null (returns 0).
 */
size_t wavebif_node_count(const struct WavebifModel *model);

/**
 * Overrides the surface tension of the model.
 *
 * # Safety
 * `model` must be a live handle.
 */
enum WavebifStatus wavebif_set_sigma(struct WavebifModel *model, double sigma);

/**
 * `lambda0`, the maximizer of the Bernoulli constant.
 *
 * # Safety
 * `model` and `out` must be valid pointers.
 */
enum WavebifStatus wavebif_lambda0(const struct WavebifModel *model, double *out);

/**
 * Laminar heights `H(p; lambda)` on the p-nodes and the Bernoulli constant.
 *
 * # Safety
 * `h` must hold `len` doubles; `q` and `written` may be null.
 */
enum WavebifStatus wavebif_laminar(const struct WavebifModel *model,
                                   double lambda,
                                   double *h,
                                   size_t len,
                                   double *q,
                                   size_t *written);

/**
 * Negative-type eigenvalue `nu(lambda)`.
 *
 * # Safety
 * `model` and `out` must be valid pointers.
 */
enum WavebifStatus wavebif_nu(const struct WavebifModel *model, double lambda, double *out);

/**
 * `lambda*` with `nu(lambda*) = -1` and its mode on the p-nodes. The search
 * interval comes from the config.
 *
 * # Safety
 * `lambda_star` must be valid; `mode` holds `len` doubles or is null with
 * `len == 0` when the mode is not wanted.
 */
enum WavebifStatus wavebif_find_lambda_star(const struct WavebifModel *model,
                                            double *lambda_star,
                                            double *mode,
                                            size_t len,
                                            size_t *written);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WAVEBIF_H */
