#ifndef APEXFLOW_APEXFLOW_H
#define APEXFLOW_APEXFLOW_H

#include <stddef.h>
#include <stdint.h>

#if defined(APEXFLOW_BUILDING_LIBRARY)
#define APEXFLOW_API __attribute__((visibility("default")))
#else
#define APEXFLOW_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum apexflow_status {
    APEXFLOW_OK = 0,
    APEXFLOW_ERR_INVALID_ARGUMENT = 1,
    APEXFLOW_ERR_VALIDATION = 2,
    APEXFLOW_ERR_IO = 3,
    APEXFLOW_ERR_FORMAT = 4,
    APEXFLOW_ERR_DIVERGENCE = 5,
    APEXFLOW_ERR_PROTOCOL = 6,
    APEXFLOW_ERR_RUNTIME = 7
} apexflow_status;

/* Message of the last failed call on this thread; empty after success. */
APEXFLOW_API const char* apexflow_last_error(void);
APEXFLOW_API const char* apexflow_status_name(apexflow_status status);
APEXFLOW_API const char* apexflow_version(void);

/* 0 error, 1 warn, 2 info, 3 debug. */
APEXFLOW_API apexflow_status apexflow_set_log_level(int level);

enum { APEXFLOW_NUM_CLASSES = 3, APEXFLOW_INPUT_SIZE = 28 };

/* ---- manifest ---- */

typedef struct apexflow_manifest apexflow_manifest;

typedef struct apexflow_record_info {
    const char* dataset;
    const char* subject;
    const char* video;
    const char* raw_label;
    int label; /* 0 negative, 1 positive, 2 surprise */
    int onset_index;
    int apex_index; /* 0 when not annotated */
    int offset_index;
    const char* frame_dir;
    /* File stem for per-video artifacts: the video id, or
     * <dataset>_<subject>_<video> when video ids repeat in the manifest. */
    const char* artifact_stem;
} apexflow_record_info;

APEXFLOW_API apexflow_status apexflow_manifest_load(const char* path, apexflow_manifest** out);
APEXFLOW_API void apexflow_manifest_free(apexflow_manifest* manifest);
APEXFLOW_API size_t apexflow_manifest_size(const apexflow_manifest* manifest);
APEXFLOW_API size_t apexflow_manifest_excluded(const apexflow_manifest* manifest);
APEXFLOW_API apexflow_status apexflow_manifest_class_counts(const apexflow_manifest* manifest,
                                                           size_t counts[APEXFLOW_NUM_CLASSES]);
APEXFLOW_API size_t apexflow_manifest_subject_count(const apexflow_manifest* manifest);
/* Strings stay valid until the manifest is freed. */
APEXFLOW_API apexflow_status apexflow_manifest_record(const apexflow_manifest* manifest, size_t index,
                                                      apexflow_record_info* out);

/* ---- regions of interest and apex spotting ---- */

typedef struct apexflow_rect {
    int x, y, w, h;
} apexflow_rect;

typedef struct apexflow_rois {
    apexflow_rect left_eyebrow;
    apexflow_rect right_eyebrow;
    apexflow_rect mouth;
} apexflow_rois;

APEXFLOW_API void apexflow_rois_default(apexflow_rois* out);
APEXFLOW_API apexflow_status apexflow_rois_load(const char* path, apexflow_rois* out);

/* apex_out[i] receives the spotted record-level apex index of record i, even
 * when the record carries an annotated apex. */
APEXFLOW_API apexflow_status apexflow_spot_apexes(const apexflow_manifest* manifest, const apexflow_rois* rois,
                                                  int jobs, int* apex_out);

/* ---- optical flow ---- */

typedef struct apexflow_tvl1_params {
    double lambda;
    double theta;
    double tau;
    int n_scales;
    double zoom;
    int n_warps;
    double epsilon;
    int max_inner_iterations;
} apexflow_tvl1_params;

APEXFLOW_API void apexflow_tvl1_defaults(apexflow_tvl1_params* out);

typedef struct apexflow_flow apexflow_flow;

APEXFLOW_API apexflow_status apexflow_flow_estimate_images(const char* onset_path, const char* apex_path,
                                                           const apexflow_tvl1_params* params, apexflow_flow** out);
APEXFLOW_API apexflow_status apexflow_flow_read(const char* path, apexflow_flow** out);
APEXFLOW_API apexflow_status apexflow_flow_write(const apexflow_flow* flow, const char* path);
APEXFLOW_API apexflow_status apexflow_flow_write_color(const apexflow_flow* flow, const char* png_path);
APEXFLOW_API int apexflow_flow_width(const apexflow_flow* flow);
APEXFLOW_API int apexflow_flow_height(const apexflow_flow* flow);
/* Row-major component planes, width * height values each. */
APEXFLOW_API const double* apexflow_flow_u(const apexflow_flow* flow);
APEXFLOW_API const double* apexflow_flow_v(const apexflow_flow* flow);
APEXFLOW_API void apexflow_flow_free(apexflow_flow* flow);

/* Network inputs for every record of a manifest. */
typedef struct apexflow_flowstore apexflow_flowstore;

typedef struct apexflow_flowstore_stats {
    size_t computed; /* flows estimated in this call */
    size_t loaded;   /* flows read from the cache directory */
    size_t spotted;  /* apexes that came from spotting */
} apexflow_flowstore_stats;

/* Fills a store for `manifest`. With a cache directory, existing
 * <dir>/<artifact_stem>.flo files are reused and missing ones are computed
 * and written, so interrupted runs resume. Flows are held at float32
 * precision either way. `params` and `rois` may be NULL for the defaults,
 * `stats` may be NULL. */
APEXFLOW_API apexflow_status apexflow_flowstore_build(const apexflow_manifest* manifest,
                                                      const apexflow_tvl1_params* params, const apexflow_rois* rois,
                                                      const char* cache_dir, int jobs, apexflow_flowstore** out,
                                                      apexflow_flowstore_stats* stats);
APEXFLOW_API size_t apexflow_flowstore_size(const apexflow_flowstore* store);
APEXFLOW_API void apexflow_flowstore_free(apexflow_flowstore* store);

/* ---- network ---- */

enum { APEXFLOW_STREAMS_BOTH = 0, APEXFLOW_STREAMS_HORIZONTAL = 1, APEXFLOW_STREAMS_VERTICAL = 2 };

typedef struct apexflow_train_config {
    double learning_rate;
    int epochs;
    double dropout_keep;
    uint64_t seed;
    double adam_beta1;
    double adam_beta2;
    double adam_epsilon;
    int streams;
} apexflow_train_config;

APEXFLOW_API void apexflow_train_defaults(apexflow_train_config* out);

typedef struct apexflow_model apexflow_model;

APEXFLOW_API apexflow_status apexflow_model_train(const apexflow_manifest* manifest, const apexflow_flowstore* store,
                                                  const apexflow_train_config* config, apexflow_model** out);
APEXFLOW_API apexflow_status apexflow_model_save(const apexflow_model* model, const char* path);
APEXFLOW_API apexflow_status apexflow_model_load(const char* path, apexflow_model** out);
APEXFLOW_API apexflow_status apexflow_model_predict(const apexflow_model* model, const apexflow_flowstore* store,
                                                    size_t index, int* label,
                                                    double probs[APEXFLOW_NUM_CLASSES]);
/* Mean training loss per epoch; empty for a loaded model. */
APEXFLOW_API size_t apexflow_model_loss_count(const apexflow_model* model);
APEXFLOW_API const double* apexflow_model_loss_curve(const apexflow_model* model);
APEXFLOW_API size_t apexflow_model_parameter_count(const apexflow_model* model);
APEXFLOW_API void apexflow_model_free(apexflow_model* model);

/* ---- evaluation ---- */

typedef struct apexflow_report apexflow_report;

APEXFLOW_API apexflow_status apexflow_report_run(const apexflow_manifest* manifest, const apexflow_flowstore* store,
                                                 const apexflow_train_config* config, int jobs,
                                                 apexflow_report** out);
APEXFLOW_API apexflow_status apexflow_report_write_json(const apexflow_report* report, const char* path);
APEXFLOW_API apexflow_status apexflow_report_write_text(const apexflow_report* report, const char* path);
APEXFLOW_API apexflow_status apexflow_report_write_predictions(const apexflow_report* report, const char* path);
APEXFLOW_API double apexflow_report_accuracy(const apexflow_report* report);
APEXFLOW_API double apexflow_report_macro_f(const apexflow_report* report);
APEXFLOW_API double apexflow_report_fold_mean_accuracy(const apexflow_report* report);
APEXFLOW_API size_t apexflow_report_fold_count(const apexflow_report* report);
APEXFLOW_API int apexflow_report_complete(const apexflow_report* report);
APEXFLOW_API void apexflow_report_free(apexflow_report* report);

typedef struct apexflow_sweep apexflow_sweep;

APEXFLOW_API apexflow_status apexflow_sweep_run(const apexflow_manifest* manifest, const apexflow_flowstore* store,
                                                const apexflow_train_config* config, const int* epochs,
                                                size_t epoch_count, int jobs, apexflow_sweep** out);
APEXFLOW_API apexflow_status apexflow_sweep_write_text(const apexflow_sweep* sweep, const char* path);
APEXFLOW_API apexflow_status apexflow_sweep_write_json(const apexflow_sweep* sweep, const char* path);
APEXFLOW_API size_t apexflow_sweep_rows(const apexflow_sweep* sweep);
APEXFLOW_API size_t apexflow_sweep_best(const apexflow_sweep* sweep);
APEXFLOW_API double apexflow_sweep_accuracy(const apexflow_sweep* sweep, size_t row);
APEXFLOW_API void apexflow_sweep_free(apexflow_sweep* sweep);

/* ---- synthetic corpus ---- */

typedef struct apexflow_synth_config {
    int subjects;
    int videos_per_subject;
    int frames;
    uint64_t seed;
    int include_apex;
} apexflow_synth_config;

APEXFLOW_API void apexflow_synth_defaults(apexflow_synth_config* out);
/* Writes manifest.json, ground_truth.json and frame directories. */
APEXFLOW_API apexflow_status apexflow_synth_generate(const apexflow_synth_config* config, const char* out_dir);

#ifdef __cplusplus
}
#endif

#endif
