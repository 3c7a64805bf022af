#ifndef POSEFIX_POSEFIX_H
#define POSEFIX_POSEFIX_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define POSEFIX_API __declspec(dllexport)
#else
#define POSEFIX_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum posefix_status {
  POSEFIX_OK = 0,
  POSEFIX_ERR_INVALID_ARGUMENT = 1,
  POSEFIX_ERR_IO = 2,
  POSEFIX_ERR_SCHEMA = 3,
  POSEFIX_ERR_PRECONDITION = 4,
  POSEFIX_ERR_DIVERGED = 5,
  POSEFIX_ERR_INTERNAL = 6
} posefix_status;

typedef enum posefix_error_type {
  POSEFIX_GOOD = 0,
  POSEFIX_JITTER = 1,
  POSEFIX_INVERSION = 2,
  POSEFIX_SWAP = 3,
  POSEFIX_MISS = 4
} posefix_error_type;

typedef struct posefix_config posefix_config;
typedef struct posefix_skeleton posefix_skeleton;

/* Receives progress lines from long-running calls. level: 0 error .. 3 debug. */
typedef void (*posefix_log_fn)(void* user, int level, const char* message);

POSEFIX_API const char* posefix_version(void);
POSEFIX_API const char* posefix_status_name(posefix_status status);
/* Message of the last failing call on this thread; "" when none. */
POSEFIX_API const char* posefix_last_error(void);
/* Frees strings returned through char** out-parameters. */
POSEFIX_API void posefix_string_free(char* s);
POSEFIX_API void posefix_set_log_callback(posefix_log_fn fn, void* user);

/* ---- configuration ---- */
POSEFIX_API posefix_status posefix_config_default(posefix_config** out);
POSEFIX_API posefix_status posefix_config_load(const char* path, posefix_config** out);
POSEFIX_API void posefix_config_free(posefix_config* config);
POSEFIX_API posefix_status posefix_config_hash(const posefix_config* config, uint64_t* out);
/* Canonical JSON with referenced files inlined. */
POSEFIX_API posefix_status posefix_config_json(const posefix_config* config, char** out);
/* 0 error, 1 warn, 2 info, 3 debug. */
POSEFIX_API posefix_status posefix_config_log_level(const posefix_config* config, int* out);
/* Replaces the error-distribution table with the one at `path`. */
POSEFIX_API posefix_status posefix_config_set_table(posefix_config* config, const char* path);

/* ---- skeleton ---- */
POSEFIX_API posefix_status posefix_skeleton_coco(posefix_skeleton** out);
POSEFIX_API posefix_status posefix_skeleton_load(const char* path, posefix_skeleton** out);
POSEFIX_API posefix_status posefix_config_skeleton(const posefix_config* config,
                                                   posefix_skeleton** out);
POSEFIX_API void posefix_skeleton_free(posefix_skeleton* skeleton);
POSEFIX_API int posefix_skeleton_num_joints(const posefix_skeleton* skeleton);

/* ---- numerics; poses are K (x, y, v) triplets ---- */
POSEFIX_API posefix_status posefix_ks(double distance, double scale, double kappa, double* out);
POSEFIX_API posefix_status posefix_ks_radius(double level, double scale, double kappa,
                                             double* out);
/* *out_degenerate is set when the truth has no labeled joint (OKS 0). May be NULL. */
POSEFIX_API posefix_status posefix_oks(const posefix_skeleton* skeleton, const double* estimate,
                                       const double* truth, double scale, double* out,
                                       int* out_degenerate);
/* neighbors: num_neighbors poses back to back; uses the config's thresholds. */
POSEFIX_API posefix_status posefix_classify_keypoint(const posefix_config* config,
                                                     const double* target,
                                                     const double* neighbors,
                                                     size_t num_neighbors, double scale,
                                                     int joint, double x, double y,
                                                     posefix_error_type* out);

/* Maps are w*h row-major doubles. */
POSEFIX_API posefix_status posefix_gaussian_encode(double cx, double cy, double sigma, int w,
                                                   int h, double* out);
/* *out_clamped may be NULL. */
POSEFIX_API posefix_status posefix_target_encode(double cx, double cy, int w, int h, double* out,
                                                 int* out_clamped);
POSEFIX_API posefix_status posefix_spatial_softmax(const double* logits, int w, int h,
                                                   double* out);
POSEFIX_API posefix_status posefix_soft_argmax(const double* prob, int w, int h, double* out_x,
                                               double* out_y);
/* joints maps of w*h; target_coords holds 2*joints values; mask is 0/1 per
   joint. out_grad (joints*w*h) may be NULL. */
POSEFIX_API posefix_status posefix_integral_loss(const double* logits, const double* targets,
                                                 const double* target_coords,
                                                 const unsigned char* mask, int joints, int w,
                                                 int h, double heatmap_weight,
                                                 double coord_weight, double* out_loss,
                                                 double* out_heatmap_term,
                                                 double* out_coord_term, double* out_grad);

/* ---- file workflows; *out_report receives a JSON document ---- */
POSEFIX_API posefix_status posefix_synthesize_file(const posefix_config* config,
                                                   const char* gt_path, uint64_t seed,
                                                   const char* out_results,
                                                   const char* out_labels);
/* out_csv may be NULL. */
POSEFIX_API posefix_status posefix_diagnose_file(const posefix_config* config,
                                                 const char* gt_path, const char* dt_path,
                                                 const char* out_json, const char* out_csv,
                                                 char** out_report);
/* dt_before_path may be NULL. Report keys: metrics, table, csv, and with a
   baseline also before, delta_table. */
POSEFIX_API posefix_status posefix_evaluate_file(const posefix_config* config,
                                                 const char* gt_path, const char* dt_path,
                                                 const char* dt_before_path, char** out_report);
POSEFIX_API posefix_status posefix_codec_check(const posefix_config* config, uint64_t seed,
                                               int samples, char** out_report);
POSEFIX_API posefix_status posefix_train_toy(const posefix_config* config, uint64_t seed,
                                             const char* out_params, char** out_report);
/* images_dir may be NULL. */
POSEFIX_API posefix_status posefix_refine_file(const posefix_config* config,
                                               const char* params_path, const char* gt_path,
                                               const char* dt_path, const char* images_dir,
                                               int flip_tta, const char* out_results,
                                               char** out_report);
/* modes: comma-separated (C2F,C2C,F2F,C2F_LH,C2F_LC); NULL or "" runs the
   configured list. out_csv may be NULL. */
POSEFIX_API posefix_status posefix_ablate(const posefix_config* config, const char* modes,
                                          uint64_t seed, char** out_csv, char** out_report);

/* FNV-1a 64 of a file's bytes. */
POSEFIX_API posefix_status posefix_hash_file(const char* path, uint64_t* out);

#ifdef __cplusplus
}
#endif

#endif
