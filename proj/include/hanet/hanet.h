/* SPDX-FileCopyrightText: Copyright (c) 2026 HANet contributors */
/* SPDX-License-Identifier: Apache-2.0 */

/* C interface to the HANet crowd-counting library. Every call returns a
 * status code; on failure hanet_last_error() describes the problem (per
 * thread). Strings handed out by the library are released with
 * hanet_free_string(). Run configurations travel as JSON text: missing
 * keys keep their defaults, unknown keys are rejected. */

#ifndef HANET_HANET_H_
#define HANET_HANET_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define HANET_API __declspec(dllexport)
#else
#define HANET_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Values double as CLI exit codes. */
typedef enum hanet_status {
  HANET_OK = 0,
  HANET_ERR_USAGE = 1,      /* bad arguments (null pointers, unknown names) */
  HANET_ERR_VALIDATION = 2, /* invalid config, data, shapes or files */
  HANET_ERR_NUMERIC = 3,    /* training aborted on a non-finite loss */
  HANET_ERR_INTERNAL = 4
} hanet_status;

typedef struct hanet_model hanet_model;

HANET_API const char* hanet_version(void);
HANET_API const char* hanet_last_error(void);
/* Step index of the last HANET_ERR_NUMERIC, otherwise -1. */
HANET_API int64_t hanet_last_error_iteration(void);
HANET_API void hanet_free_string(char* s);
/* "trace", "debug", "info", "warn", "error" or "off". */
HANET_API hanet_status hanet_set_log_level(const char* level);

/* Full RunConfig JSON: `preset` ("full", "toy" or NULL for "full"), then
 * each non-NULL overlay applied in order. The result is validated. */
HANET_API hanet_status hanet_config_resolve(const char* preset, const char* const* overlays, size_t n_overlays,
                                            char** out_json);
/* Reads a config file into JSON text (not validated). */
HANET_API hanet_status hanet_config_read(const char* path, char** out_json);

/* Synthetic dataset: PNGs, annotation JSONs and manifest.json in out_dir. */
HANET_API hanet_status hanet_synth(const char* out_dir, int images, int64_t height, int64_t width, int heads_lo,
                                   int heads_hi, uint64_t seed);

/* Ground-truth density maps for every manifest record: <id>.dmap and
 * <id>.pgm in out_dir. `config_json` supplies the kernel recipe (NULL for
 * defaults). Bad records are counted in *failed and skipped. */
HANET_API hanet_status hanet_make_gt(const char* manifest, const char* config_json, const char* out_dir,
                                     int* written, int* failed);

/* Trains from a RunConfig; writes config.json, loss.csv and model.hnck. */
HANET_API hanet_status hanet_train(const char* config_json, const char* out_dir, double* first_loss,
                                   double* final_loss);

/* Evaluates a checkpoint on a manifest; writes eval.csv and eval.json when
 * out_dir is non-NULL. */
HANET_API hanet_status hanet_eval(const char* checkpoint, const char* manifest, const char* out_dir, double* mae,
                                  double* mse);

/* Runs an ablation suite ("components", "fusion_order", "patch_size") and
 * writes the CSV. */
HANET_API hanet_status hanet_ablate(const char* config_json, const char* suite, const char* out_csv, int* rows,
                                    int* failed);

HANET_API hanet_status hanet_model_create(const char* config_json, hanet_model** out);
HANET_API hanet_status hanet_model_load(const char* checkpoint, hanet_model** out);
HANET_API hanet_status hanet_model_save(hanet_model* model, const char* checkpoint);
HANET_API void hanet_model_free(hanet_model* model);
HANET_API int64_t hanet_model_parameter_count(hanet_model* model);
/* The RunConfig the model was built from, as JSON. */
HANET_API hanet_status hanet_model_config(hanet_model* model, char** out_json);

/* Predicts on an interleaved 8-bit RGB image of height x width. The density
 * map (ceil(h/8) x ceil(w/8)) is copied into `density` when it is non-NULL
 * and `capacity` is large enough; *map_h / *map_w receive its size. */
HANET_API hanet_status hanet_model_predict(hanet_model* model, const uint8_t* rgb, int64_t height, int64_t width,
                                           double* count, double* density, size_t capacity, int64_t* map_h,
                                           int64_t* map_w);

/* Predicts on a PNG; writes <stem>.dmap and <stem>.pgm when out_dir is
 * non-NULL. */
HANET_API hanet_status hanet_predict_file(hanet_model* model, const char* image_png, const char* out_dir,
                                          double* count);

#ifdef __cplusplus
}
#endif

#endif /* HANET_HANET_H_ */
