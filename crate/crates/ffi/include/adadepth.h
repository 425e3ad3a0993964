#ifndef ADADEPTH_H
#define ADADEPTH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AdadepthStatus {
  ADADEPTH_STATUS_OK = 0,
  ADADEPTH_STATUS_NULL_POINTER = 1,
  ADADEPTH_STATUS_INVALID_ARGUMENT = 2,
  ADADEPTH_STATUS_INVALID_GRID = 3,
  ADADEPTH_STATUS_DIMENSION_MISMATCH = 4,
  ADADEPTH_STATUS_INVALID_DOMAIN = 5,
  ADADEPTH_STATUS_INVALID_SCENE = 6,
  ADADEPTH_STATUS_CONFIG = 7,
  ADADEPTH_STATUS_FORMAT = 8,
  ADADEPTH_STATUS_IO = 9,
  ADADEPTH_STATUS_DIVERGED = 10,
  ADADEPTH_STATUS_BUFFER_TOO_SMALL = 11,
  ADADEPTH_STATUS_PANIC = 12,
} AdadepthStatus;

/**
 * Experiment configuration: scene spec plus solver settings.
 */
typedef struct AdadepthConfig AdadepthConfig;

/**
 * A rendered scene with ground truth.
 */
typedef struct AdadepthScene AdadepthScene;

/**
 * Result of a solve on a scene.
 */
typedef struct AdadepthSolution AdadepthSolution;

/**
 * Final metrics of a solve or an evaluation. Depth errors in meters,
 * inverse-depth errors in inverse meters.
 */
typedef struct AdadepthMetrics {
  double mae;
  double rmse;
  double imae;
  double irmse;
  size_t evaluated_pixels;
} AdadepthMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` as a
 * NUL-terminated string, truncating if needed. Returns the full message
 * length in bytes, excluding the terminator. `buf` may be null to query
 * the length.
 *
 * # Safety
 * `buf` must be null or valid for writes of `len` bytes.
 */
size_t adadepth_last_error_message(char *buf, size_t len);

/**
 * A configuration holding the defaults.
 */
struct AdadepthConfig *adadepth_config_new(void);

/**
 * Reads a `key = value` configuration file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` valid for writes.
 */
enum AdadepthStatus adadepth_config_load(const char *path, struct AdadepthConfig **out);

/**
 * Sets one configuration key. The whole configuration is validated
 * afterwards; on failure it is left unchanged.
 *
 * # Safety
 * `cfg` must come from this library; `key` and `value` must be NUL-terminated.
 */
enum AdadepthStatus adadepth_config_set(struct AdadepthConfig *cfg,
                                        const char *key,
                                        const char *value);

/**
 * Uses `seed` for both scene generation and the solver.
 *
 * # Safety
 * `cfg` must come from this library.
 */
enum AdadepthStatus adadepth_config_set_seed(struct AdadepthConfig *cfg, uint64_t seed);

/**
 * # Safety
 * `cfg` must be null or come from this library and not be used afterwards.
 */
void adadepth_config_free(struct AdadepthConfig *cfg);

/**
 * Renders the scene described by `cfg`.
 *
 * # Safety
 * `cfg` must come from this library and `out` be valid for writes.
 */
enum AdadepthStatus adadepth_scene_generate(const struct AdadepthConfig *cfg,
                                            struct AdadepthScene **out);

/**
 * Reads a scene directory.
 *
 * # Safety
 * `dir` must be NUL-terminated and `out` valid for writes.
 */
enum AdadepthStatus adadepth_scene_load(const char *dir, struct AdadepthScene **out);

/**
 * Writes a scene directory, creating it if needed.
 *
 * # Safety
 * `scene` must come from this library and `dir` be NUL-terminated.
 */
enum AdadepthStatus adadepth_scene_save(const struct AdadepthScene *scene, const char *dir);

/**
 * # Safety
 * `scene` must come from this library; `width` and `height` valid for writes.
 */
enum AdadepthStatus adadepth_scene_dims(const struct AdadepthScene *scene,
                                        size_t *width,
                                        size_t *height);

/**
 * Copies the ground-truth depth, row-major, into `out`.
 *
 * # Safety
 * `scene` must come from this library and `out` be valid for `len` writes.
 */
enum AdadepthStatus adadepth_scene_true_depth(const struct AdadepthScene *scene,
                                              double *out,
                                              size_t len);

/**
 * # Safety
 * `scene` must be null or come from this library and not be used afterwards.
 */
void adadepth_scene_free(struct AdadepthScene *scene);

/**
 * Optimizes depth for `scene` with the solver settings of `cfg` and
 * evaluates it against the scene's ground truth.
 *
 * # Safety
 * `scene` and `cfg` must come from this library and `out` be valid for writes.
 */
enum AdadepthStatus adadepth_solve(const struct AdadepthScene *scene,
                                   const struct AdadepthConfig *cfg,
                                   struct AdadepthSolution **out);

/**
 * Copies the solved depth, row-major, into `out`.
 *
 * # Safety
 * `solution` must come from this library and `out` be valid for `len` writes.
 */
enum AdadepthStatus adadepth_solution_depth(const struct AdadepthSolution *solution,
                                            double *out,
                                            size_t len);

/**
 * # Safety
 * `solution` must come from this library and `out` be valid for writes.
 */
enum AdadepthStatus adadepth_solution_metrics(const struct AdadepthSolution *solution,
                                              struct AdadepthMetrics *out);

/**
 * Number of recorded solver steps.
 *
 * # Safety
 * `solution` must come from this library and `out` be valid for writes.
 */
enum AdadepthStatus adadepth_solution_steps(const struct AdadepthSolution *solution, size_t *out);

/**
 * # Safety
 * `solution` must be null or come from this library and not be used afterwards.
 */
void adadepth_solution_free(struct AdadepthSolution *solution);

/**
 * Metrics of `pred` against `gt` (both `width * height`, row-major) over
 * the pixels where `gt` is positive.
 *
 * # Safety
 * `pred` and `gt` must be valid for `width * height` reads and `out` for writes.
 */
enum AdadepthStatus adadepth_evaluate(const double *pred,
                                      const double *gt,
                                      size_t width,
                                      size_t height,
                                      struct AdadepthMetrics *out);

/**
 * Soft visibility weight of a standardized residual `rho` given the mean
 * residual `mu` of its frame.
 */
double adadepth_visibility_weight(double rho, double mu, double a0, double b0, double eps);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ADADEPTH_H */
