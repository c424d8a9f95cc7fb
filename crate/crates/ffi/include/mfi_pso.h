/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef MFI_PSO_H
#define MFI_PSO_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code of every fallible call.
 */
typedef enum MfiStatus {
  MFI_STATUS_OK = 0,
  /**
   * A required pointer argument was NULL.
   */
  MFI_STATUS_NULL_ARGUMENT = 1,
  /**
   * An argument violated a precondition (shape, range, option mix).
   */
  MFI_STATUS_INVALID_INPUT = 2,
  /**
   * A file or JSON document could not be parsed.
   */
  MFI_STATUS_PARSE = 3,
  /**
   * A file could not be read or written.
   */
  MFI_STATUS_IO = 4,
  /**
   * A numerical routine failed.
   */
  MFI_STATUS_NUMERICAL = 5,
  /**
   * The attack finished without meeting its success criteria.
   */
  MFI_STATUS_INFEASIBLE = 6,
  /**
   * An output buffer is too small; the required length is reported.
   */
  MFI_STATUS_BUFFER_TOO_SMALL = 7,
  /**
   * An internal panic was caught at the boundary.
   */
  MFI_STATUS_PANIC = 8,
} MfiStatus;

/**
 * Trained classifier.
 */
typedef struct MfiModel MfiModel;

/**
 * Outcome of one attack.
 */
typedef struct MfiResult MfiResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread, or NULL. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *mfi_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mfi_version(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must be NULL or a pointer obtained from this library and not yet freed.
 */
void mfi_string_free(char *s);

/**
 * Loads a checkpoint written by `mfi-pso train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be a valid pointer.
 */
enum MfiStatus mfi_model_load(const char *path, struct MfiModel **out);

/**
 * Writes the model as a checkpoint.
 *
 * # Safety
 * `model` must be a live handle; `path` a NUL-terminated string.
 */
enum MfiStatus mfi_model_save(const struct MfiModel *model, const char *path);

/**
 * Releases a model handle.
 *
 * # Safety
 * `model` must be NULL or a handle from [`mfi_model_load`] not yet freed.
 */
void mfi_model_free(struct MfiModel *model);

/**
 * Number of input coordinates, or 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t mfi_model_input_dim(const struct MfiModel *model);

/**
 * Number of classes, or 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t mfi_model_num_classes(const struct MfiModel *model);

/**
 * Class probabilities of `pixels` into `probs_out` (`probs_len` >= classes).
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
enum MfiStatus mfi_predict(const struct MfiModel *model,
                           const double *pixels,
                           size_t len,
                           double *probs_out,
                           size_t probs_len);

/**
 * Image-level mFI of a labelled image into `out`.
 *
 * # Safety
 * Pointers must be valid; `pixels` must hold `width * height * channels` values.
 */
enum MfiStatus mfi_image_mfi(const struct MfiModel *model,
                             const double *pixels,
                             size_t width,
                             size_t height,
                             size_t channels,
                             int64_t label,
                             double *out);

/**
 * Per-pixel mFI map into `out`. `target` selects the class whose
 * probability is measured (-1: the true `label`). `required`, if non-NULL,
 * receives the map length even when the buffer is too small.
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
enum MfiStatus mfi_pixel_map(const struct MfiModel *model,
                             const double *pixels,
                             size_t width,
                             size_t height,
                             size_t channels,
                             int64_t label,
                             int64_t target,
                             double *out,
                             size_t out_len,
                             size_t *required);

/**
 * Attacks one image. `spec_json` is a JSON object with any of the attack
 * options (`m`, `pixel_indices`, `p_err`, `y_target`, `epsilon`, `a`, `b`,
 * `swarm`, `mfi_pixel`, `mfi_pixel_quantile`, `delta`); NULL or `{}` uses
 * the defaults. A handle is returned whether or not the attack succeeded;
 * check [`mfi_result_success`].
 *
 * # Safety
 * Pointers must be valid; `pixels` must hold `width * height * channels` values.
 */
enum MfiStatus mfi_attack(const struct MfiModel *model,
                          const double *pixels,
                          size_t width,
                          size_t height,
                          size_t channels,
                          int64_t label,
                          const char *spec_json,
                          struct MfiResult **out);

/**
 * Releases a result handle.
 *
 * # Safety
 * `result` must be NULL or a handle from [`mfi_attack`] not yet freed.
 */
void mfi_result_free(struct MfiResult *result);

/**
 * 1 if the attack met its success criteria, 0 otherwise (or for NULL).
 *
 * # Safety
 * `result` must be NULL or a live handle.
 */
int32_t mfi_result_success(const struct MfiResult *result);

/**
 * Predicted class of the adversarial image, or -1 for NULL.
 *
 * # Safety
 * `result` must be NULL or a live handle.
 */
int64_t mfi_result_label_after(const struct MfiResult *result);

/**
 * Copies the adversarial image into `out`; see [`mfi_pixel_map`] for `required`.
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
enum MfiStatus mfi_result_adversarial(const struct MfiResult *result,
                                      double *out,
                                      size_t out_len,
                                      size_t *required);

/**
 * Serializes the full result as JSON into `*out` (free with [`mfi_string_free`]).
 *
 * # Safety
 * `result` must be a live handle; `out` a valid pointer.
 */
enum MfiStatus mfi_result_to_json(const struct MfiResult *result, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MFI_PSO_H */
