#ifndef IRISPAD_H
#define IRISPAD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum IrisPadStatus {
  IRIS_PAD_STATUS_OK = 0,
  IRIS_PAD_STATUS_NULL_POINTER = 1,
  IRIS_PAD_STATUS_INVALID_ARGUMENT = 2,
  IRIS_PAD_STATUS_IO = 3,
  IRIS_PAD_STATUS_INVALID_RIG = 4,
  IRIS_PAD_STATUS_DIMENSION_MISMATCH = 5,
  IRIS_PAD_STATUS_EMPTY_REGION = 6,
  IRIS_PAD_STATUS_DEGENERATE = 7,
  IRIS_PAD_STATUS_INVALID_MODEL = 8,
  IRIS_PAD_STATUS_PANIC = 9,
} IrisPadStatus;

/**
 * Opaque trained area model.
 */
typedef struct IrisPadAreaModel IrisPadAreaModel;

/**
 * Opaque normal field.
 */
typedef struct IrisPadNormalField IrisPadNormalField;

/**
 * Opaque light rig.
 */
typedef struct IrisPadRig IrisPadRig;

/**
 * Pupil and iris circles in pixel coordinates.
 */
typedef struct IrisPadAnnulus {
  double pupil_cx;
  double pupil_cy;
  double pupil_r;
  double iris_cx;
  double iris_cy;
  double iris_r;
} IrisPadAnnulus;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *irispad_version(void);

/**
 * Message for the last failed call on this thread, or null after a
 * success. Valid until the next call on the same thread.
 */
const char *irispad_last_error(void);

/**
 * Creates a rig from `k` row-major light directions (`k * 3` doubles).
 * Directions are normalized; zero or parallel rows are rejected.
 *
 * # Safety
 * `directions` must point to `k * 3` readable doubles and `out` must be
 * writable.
 */
enum IrisPadStatus irispad_rig_new(const double *directions, size_t k, struct IrisPadRig **out);

/**
 * Loads a rig from a JSON file `{"directions": [[x, y, z], ...]}`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` must be writable.
 */
enum IrisPadStatus irispad_rig_from_json_file(const char *path, struct IrisPadRig **out);

/**
 * Number of lights in a rig, or 0 for a null handle.
 *
 * # Safety
 * `rig` must be null or a live handle.
 */
size_t irispad_rig_len(const struct IrisPadRig *rig);

/**
 * # Safety
 * `rig` must be null or a handle not yet freed.
 */
void irispad_rig_free(struct IrisPadRig *rig);

/**
 * Estimates normals from a left-lit and right-lit image with a two-light
 * rig. Pixels outside `mask` are marked invalid.
 *
 * # Safety
 * `left`, `right` and a non-null `mask` must hold `width * height` bytes;
 * `rig` must be a live handle and `out` writable.
 */
enum IrisPadStatus irispad_estimate_normals(const struct IrisPadRig *rig,
                                            const uint8_t *left,
                                            const uint8_t *right,
                                            const uint8_t *mask,
                                            size_t width,
                                            size_t height,
                                            struct IrisPadNormalField **out);

/**
 * # Safety
 * `field` must be a live handle; `width` and `height` writable.
 */
enum IrisPadStatus irispad_normal_field_dims(const struct IrisPadNormalField *field,
                                             size_t *width,
                                             size_t *height);

/**
 * Unit normal at `(x, y)` into `normal[0..3]`; invalid pixels give zeros
 * and `*valid = false`.
 *
 * # Safety
 * `field` must be a live handle, `normal` must hold 3 writable doubles and
 * `valid` must be writable.
 */
enum IrisPadStatus irispad_normal_field_get(const struct IrisPadNormalField *field,
                                            size_t x,
                                            size_t y,
                                            double *normal,
                                            bool *valid);

/**
 * # Safety
 * `field` must be null or a handle not yet freed.
 */
void irispad_normal_field_free(struct IrisPadNormalField *field);

/**
 * Writes 1 for pixels inside the annulus and 0 elsewhere.
 *
 * # Safety
 * `annulus` must be readable and `out` must hold `width * height` bytes.
 */
enum IrisPadStatus irispad_annulus_mask(const struct IrisPadAnnulus *annulus,
                                        size_t width,
                                        size_t height,
                                        uint8_t *out);

/**
 * Variance of normal deviations over `mask` and valid pixels.
 *
 * # Safety
 * `field` must be a live handle, a non-null `mask` must hold
 * `width * height` bytes, and the outputs must be writable.
 */
enum IrisPadStatus irispad_base_score(const struct IrisPadNormalField *field,
                                      const uint8_t *mask,
                                      double *score,
                                      size_t *n_pixels);

/**
 * Loads an area model written by `irispad train-areas`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` must be writable.
 */
enum IrisPadStatus irispad_area_model_load(const char *path, struct IrisPadAreaModel **out);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void irispad_area_model_free(struct IrisPadAreaModel *model);

/**
 * Sector-weighted score of a field over `mask` within `annulus`.
 *
 * # Safety
 * Handles must be live, `annulus` readable, a non-null `mask` must hold
 * `width * height` bytes, and the outputs must be writable.
 */
enum IrisPadStatus irispad_weighted_score(const struct IrisPadAreaModel *model,
                                          const struct IrisPadNormalField *field,
                                          const uint8_t *mask,
                                          const struct IrisPadAnnulus *annulus,
                                          double *score,
                                          size_t *n_pixels);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IRISPAD_H */
