#ifndef ALSIM_H
#define ALSIM_H

/* Generated by cbindgen from alsim-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every API function.
 */
typedef enum AlsimStatus {
  ALSIM_STATUS_OK = 0,
  ALSIM_STATUS_NULL_POINTER = 1,
  ALSIM_STATUS_INVALID_ARGUMENT = 2,
  ALSIM_STATUS_IO = 3,
  ALSIM_STATUS_PARSE = 4,
  ALSIM_STATUS_UNDEFINED_METRIC = 5,
  ALSIM_STATUS_INSUFFICIENT_DATA = 6,
  ALSIM_STATUS_EMPTY_ANNOTATION = 7,
  ALSIM_STATUS_EXHAUSTED_POOL = 8,
  ALSIM_STATUS_UTF8 = 9,
  ALSIM_STATUS_PANIC = 10,
} AlsimStatus;

/**
 * Opaque binary label volume.
 */
typedef struct AlsimLabels AlsimLabels;

/**
 * Opaque trained model: parameters plus feature configuration.
 */
typedef struct AlsimModel AlsimModel;

/**
 * Opaque scalar volume (image, probability, or entropy field).
 */
typedef struct AlsimVolume AlsimVolume;

/**
 * Segmentation metrics for one prediction/reference pair. `*_defined` is 0
 * when the metric is undefined for the pair (empty mask); the value is
 * meaningless then.
 */
typedef struct AlsimMetrics {
  double dice;
  double rve_pct;
  double msd_mm;
  double hd_mm;
  uint8_t dice_defined;
  uint8_t rve_defined;
  uint8_t msd_defined;
  uint8_t hd_defined;
} AlsimMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *alsim_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *alsim_version(void);

/**
 * Read a scalar volume (MET_FLOAT) from an MHD file.
 */
enum AlsimStatus alsim_volume_read(const char *path, struct AlsimVolume **out);

/**
 * Write a scalar volume as MET_FLOAT (values stored at 32-bit precision).
 */
enum AlsimStatus alsim_volume_write(const struct AlsimVolume *volume, const char *path);

void alsim_volume_free(struct AlsimVolume *volume);

/**
 * Grid extents, written as `[nx, ny, nz]`.
 */
enum AlsimStatus alsim_volume_dims(const struct AlsimVolume *volume, uint64_t *out_dims);

/**
 * Voxel spacing in millimeters, written as `[dx, dy, dz]`.
 */
enum AlsimStatus alsim_volume_spacing(const struct AlsimVolume *volume, double *out_spacing);

/**
 * Total voxel count.
 */
enum AlsimStatus alsim_volume_len(const struct AlsimVolume *volume, size_t *out_len);

/**
 * Copy the voxel data (x-fastest order) into a caller buffer of exactly
 * `len` elements; `len` must equal the volume length.
 */
enum AlsimStatus alsim_volume_copy_data(const struct AlsimVolume *volume,
                                        double *buffer,
                                        size_t len);

/**
 * Read a label volume (MET_UCHAR) from an MHD file.
 */
enum AlsimStatus alsim_labels_read(const char *path, struct AlsimLabels **out);

enum AlsimStatus alsim_labels_write(const struct AlsimLabels *labels, const char *path);

void alsim_labels_free(struct AlsimLabels *labels);

enum AlsimStatus alsim_labels_dims(const struct AlsimLabels *labels, uint64_t *out_dims);

/**
 * Copy label bytes (0/1, x-fastest order) into a buffer of exactly `len`.
 */
enum AlsimStatus alsim_labels_copy_data(const struct AlsimLabels *labels,
                                        uint8_t *buffer,
                                        size_t len);

/**
 * Generate a synthetic phantom. `spec_json` holds a PhantomSpec document;
 * pass NULL for the default spec. Both out-handles must be freed.
 */
enum AlsimStatus alsim_phantom_generate(const char *spec_json,
                                        uint64_t seed,
                                        struct AlsimVolume **out_image,
                                        struct AlsimLabels **out_labels);

/**
 * Load a model checkpoint written by the trainer.
 */
enum AlsimStatus alsim_model_load(const char *path, struct AlsimModel **out);

void alsim_model_free(struct AlsimModel *model);

/**
 * Dense dropout-off inference: per-voxel foreground probability.
 */
enum AlsimStatus alsim_model_predict(const struct AlsimModel *model,
                                     const struct AlsimVolume *volume,
                                     struct AlsimVolume **out);

/**
 * Thresholded prediction: label 1 where the probability reaches 0.5.
 */
enum AlsimStatus alsim_model_predict_labels(const struct AlsimModel *model,
                                            const struct AlsimVolume *volume,
                                            struct AlsimLabels **out);

/**
 * Voxel-wise predictive entropy over `samples` MC-dropout passes seeded by
 * `seed`; values are in nats, bounded by ln 2.
 */
enum AlsimStatus alsim_model_entropy(const struct AlsimModel *model,
                                     const struct AlsimVolume *volume,
                                     uint32_t samples,
                                     uint64_t seed,
                                     struct AlsimVolume **out);

/**
 * DICE, RVE, MSD, and HD for a prediction/reference pair.
 */
enum AlsimStatus alsim_evaluate(const struct AlsimLabels *pred,
                                const struct AlsimLabels *reference,
                                struct AlsimMetrics *out);

/**
 * Local-maximum peaks of a 1D profile with greedy minimum-distance
 * suppression. Writes at most `capacity` indices and stores the total peak
 * count in `out_len`; the copied prefix holds the lowest indices.
 */
enum AlsimStatus alsim_find_peaks(const double *values,
                                  size_t len,
                                  size_t min_distance,
                                  size_t *out_indices,
                                  size_t capacity,
                                  size_t *out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ALSIM_H */
