#ifndef ENTROBOOT_H
#define ENTROBOOT_H

/* C interface to the entroboot library. Objects are opaque handles owned by
 * the caller and released with the matching *_free function (NULL is
 * accepted). Every fallible call returns an eb_status; on failure
 * eb_last_error() describes the problem for the calling thread. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(EB_BUILDING_LIBRARY)
#define EB_API __declspec(dllexport)
#else
#define EB_API __declspec(dllimport)
#endif
#else
#define EB_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum eb_status {
    EB_OK = 0,
    EB_ERR_INVALID_ARGUMENT = 1,
    EB_ERR_IO = 2,
    /* Quantity undefined for the input (empty ground truth, single class, ...). */
    EB_ERR_DOMAIN = 3,
    /* Synthetic scene could not be placed. */
    EB_ERR_PLACEMENT = 4,
    EB_ERR_INTERNAL = 5,
    EB_ERR_NULL = 6,
    /* A run finished but at least one image failed. */
    EB_ERR_RUN_FAILED = 7
} eb_status;

EB_API const char* eb_status_string(eb_status status);
/* Message of the last failure on this thread; "" when none. */
EB_API const char* eb_last_error(void);
EB_API const char* eb_version(void);

typedef struct eb_config eb_config;
typedef struct eb_image eb_image;
typedef struct eb_labels eb_labels;
typedef struct eb_mask eb_mask;
typedef struct eb_points eb_points;
typedef struct eb_instances eb_instances;

/* --- configuration ------------------------------------------------------ */

EB_API eb_status eb_config_new(eb_config** out);
/* TOML-style file of flat dotted keys. */
EB_API eb_status eb_config_load(const char* path, eb_config** out);
EB_API eb_status eb_config_set(eb_config* config, const char* key, const char* value);
/* Copies a NUL-terminated string into buf when it fits; *needed receives the
 * required size including the terminator. buf may be NULL to query. */
EB_API eb_status eb_config_get(const eb_config* config, const char* key, char* buf, size_t cap, size_t* needed);
EB_API eb_status eb_config_dump(const eb_config* config, char* buf, size_t cap, size_t* needed);
EB_API eb_status eb_config_validate(const eb_config* config);
/* Number of keys and the i-th key name (pointer valid for the process lifetime). */
EB_API size_t eb_config_key_count(void);
EB_API const char* eb_config_key(size_t index);
EB_API void eb_config_free(eb_config* config);

/* --- rasters ------------------------------------------------------------ */

/* data is row-major width*height doubles, or NULL for zeros; non-finite values are rejected. */
EB_API eb_status eb_image_new(int width, int height, const double* data, eb_image** out);
/* 8/16-bit PNG or PGM, scaled to [0,1]. */
EB_API eb_status eb_image_read(const char* path, eb_image** out);
/* 16-bit PNG, values clamped to [0,1]. */
EB_API eb_status eb_image_write(const eb_image* image, const char* path);
EB_API eb_status eb_image_dims(const eb_image* image, int* width, int* height);
/* Copies width*height row-major values. */
EB_API eb_status eb_image_copy_data(const eb_image* image, double* out, size_t count);
EB_API void eb_image_free(eb_image* image);

EB_API eb_status eb_labels_read(const char* path, eb_labels** out);
/* 16-bit PNG plus a JSON sidecar of bounding boxes (json_path may be NULL). */
EB_API eb_status eb_labels_write(const eb_labels* labels, const char* png_path, const char* json_path);
EB_API eb_status eb_labels_dims(const eb_labels* labels, int* width, int* height);
EB_API eb_status eb_labels_count(const eb_labels* labels, size_t* count);
EB_API eb_status eb_labels_foreground(const eb_labels* labels, eb_mask** out);
EB_API void eb_labels_free(eb_labels* labels);

EB_API eb_status eb_mask_read(const char* path, eb_mask** out);
EB_API eb_status eb_mask_write(const eb_mask* mask, const char* path);
EB_API eb_status eb_mask_popcount(const eb_mask* mask, size_t* count);
EB_API void eb_mask_free(eb_mask* mask);

/* --- point annotations --------------------------------------------------- */

EB_API eb_status eb_points_read(const char* path, eb_points** out);
EB_API eb_status eb_points_write(const eb_points* points, const char* path);
EB_API eb_status eb_points_count(const eb_points* points, size_t* count);
/* source_id is -1 when the point has no source instance. */
EB_API eb_status eb_points_get(const eb_points* points, size_t index, int* x, int* y, int32_t* source_id);
EB_API void eb_points_free(eb_points* points);

/* --- stages -------------------------------------------------------------- */

/* One scene from the config's scene.* keys with the given seed. */
EB_API eb_status eb_synth_scene(const eb_config* config, uint64_t seed, eb_image** image, eb_labels** labels);

/* Points and rasterized label mask from the config's sparsify.* keys.
 * epsilon may be NULL. */
EB_API eb_status eb_sparsify(const eb_labels* labels, const eb_config* config, uint64_t seed, eb_points** points,
                             eb_mask** label_mask, double* epsilon);
EB_API eb_status eb_rasterize_points(const eb_points* points, int radius, int width, int height, eb_mask** out);

/* Normalized entropy map in [0,1]; raw range in nats via entropy_min/max
 * (may be NULL). prob may be NULL. */
EB_API eb_status eb_bootstrap(const eb_image* image, const eb_mask* label_mask, const eb_config* config,
                              eb_image** entropy, eb_image** prob, double* entropy_min, double* entropy_max);
/* 16-bit PNG of the normalized map plus JSON with the raw range. */
EB_API eb_status eb_entropy_write(const eb_image* entropy, double entropy_min, double entropy_max,
                                  const char* png_path, const char* json_path);

/* Instancing with the config's instancer.* keys. When stages_dir is not NULL
 * the intermediate stages are written there as PNG files. */
EB_API eb_status eb_instance(const eb_image* entropy, const eb_points* points, const eb_image* image,
                             const eb_config* config, const char* stages_dir, eb_instances** out);
EB_API eb_status eb_instances_count(const eb_instances* instances, size_t* count);
EB_API eb_status eb_instances_from_labels(const eb_labels* labels, eb_instances** out);
EB_API eb_status eb_instances_write_png(const eb_instances* instances, const char* path);
/* Single-image COCO file. */
EB_API eb_status eb_instances_write_coco(const eb_instances* instances, int image_id, const char* file_name,
                                         const char* path);
EB_API void eb_instances_free(eb_instances* instances);

/* --- metrics ------------------------------------------------------------- */

EB_API eb_status eb_dice(const eb_mask* a, const eb_mask* b, double* out);
EB_API eb_status eb_dice_peak(const eb_image* entropy, const eb_mask* gt, int n_thresholds, double* peak_dice,
                              double* peak_threshold);
EB_API eb_status eb_auroc(const eb_image* entropy, const eb_mask* gt, double* out);
EB_API eb_status eb_detection_rate(const eb_instances* predictions, const eb_labels* gt, double alpha,
                                   double* rate);

/* --- theory -------------------------------------------------------------- */

EB_API eb_status eb_theory_exact(double epsilon, double x, double* out);
EB_API eb_status eb_theory_approx(double epsilon, double x, double* out);
EB_API eb_status eb_dominance_fraction(double epsilon, double x, double* out);
EB_API eb_status eb_monte_carlo(double p_ct, double epsilon, uint64_t n_trials, uint64_t seed, double* label_rate,
                                double* entropy);

/* --- runs ---------------------------------------------------------------- */

/* threads = 0 uses the hardware concurrency; ENTROBOOT_THREADS caps it.
 * out_dir overrides run.output_dir when not NULL. */
EB_API eb_status eb_run_synth(const eb_config* config, const char* out_dir, int threads);
/* Returns EB_ERR_RUN_FAILED when any image failed; n_failed may be NULL. */
EB_API eb_status eb_run_pipeline(const eb_config* config, const char* out_dir, int threads, size_t* n_failed);
/* axis: "radius", "keep_fraction" or "jitter". Writes ablation.csv. */
EB_API eb_status eb_run_ablation(const eb_config* config, const char* axis, const double* values, size_t n_values,
                                 const char* out_dir, int threads);
/* Writes theory.csv and monte_carlo.csv. */
EB_API eb_status eb_verify_theory(const char* out_dir, double p_ct, double epsilon, uint64_t n_trials, int repeats,
                                  uint64_t seed, int threads);
/* gt: dataset directory or COCO file; predictions: COCO file. Alphas and the
 * aggregation mode come from the config's eval.* keys (config may be NULL). */
EB_API eb_status eb_run_eval(const char* gt, const char* predictions, const eb_config* config, const char* out_dir);
EB_API eb_status eb_export_coco(const char* run_dir, const char* out_path);

#ifdef __cplusplus
}
#endif

#endif
