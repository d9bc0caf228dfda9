/* Stable C interface to the groupwise registration engine.
 *
 * Conventions:
 *   - every function that can fail returns grg_status; on failure the
 *     thread-local message from grg_last_error() describes what happened
 *   - handles are opaque; destroy them with the matching *_free call
 *   - accessors returning pointers into a handle stay valid until that
 *     handle is freed; returned char* strings are owned by the caller and
 *     released with grg_free_string
 *   - volumes are x-fastest scalar grids; masks are volumes holding 0/1;
 *     fields are 3-component vector grids in physical millimetres
 */
#ifndef GROUPREG_H
#define GROUPREG_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum grg_status {
    GRG_OK = 0,
    GRG_ERR_INVALID = 1, /* bad arguments, bad config */
    GRG_ERR_DATA = 2,    /* files, grids, masks */
    GRG_ERR_NUMERIC = 3  /* numerical failure */
} grg_status;

const char* grg_version(void);

/* Thread-local description of the most recent failure in this thread. */
const char* grg_last_error(void);

void grg_free_string(char* s);

/* Worker threads used by the compute kernels; 0 restores the hardware
 * default. Results are bitwise-independent of this setting. */
void grg_set_threads(int n);
int grg_get_threads(void);

/* ------------------------------------------------------------------ */
/* volumes and fields                                                  */

typedef struct grg_volume grg_volume;
typedef struct grg_field grg_field;

grg_status grg_volume_create(const int dims[3], const double spacing[3],
                             const double* data_or_null, grg_volume** out);
grg_status grg_volume_read(const char* path, grg_volume** out);
/* datatype: 2=uint8, 4=int16, 8=int32, 16=float32, 64=float64 */
grg_status grg_volume_write(const char* path, const grg_volume* vol, int datatype);
void grg_volume_free(grg_volume* vol);

void grg_volume_dims(const grg_volume* vol, int dims[3]);
void grg_volume_spacing(const grg_volume* vol, double spacing[3]);
size_t grg_volume_size(const grg_volume* vol);
const double* grg_volume_data(const grg_volume* vol);
double* grg_volume_data_mut(grg_volume* vol);

grg_status grg_field_create(const int dims[3], const double spacing[3], grg_field** out);
grg_status grg_field_read(const char* path, grg_field** out);
grg_status grg_field_write(const char* path, const grg_field* field, int datatype);
void grg_field_free(grg_field* field);

void grg_field_dims(const grg_field* field, int dims[3]);
void grg_field_spacing(const grg_field* field, double spacing[3]);
size_t grg_field_size(const grg_field* field);
/* component axis 0..2 */
const double* grg_field_data(const grg_field* field, int component);
double* grg_field_data_mut(grg_field* field, int component);

/* ------------------------------------------------------------------ */
/* transform utilities                                                 */

/* out(x) = img(x + u(x)), trilinear with edge clamping */
grg_status grg_warp_image(const grg_volume* img, const grg_field* u, grg_volume** out);
/* integer label maps: interpolated-indicator argmax (nearest semantics) */
grg_status grg_warp_labels(const grg_volume* labels, const grg_field* u, grg_volume** out);
/* 0/1 volumes: trilinear then threshold at 0.5 */
grg_status grg_warp_binary(const grg_volume* mask, const grg_field* u, grg_volume** out);
/* exp(v) by scaling and squaring */
grg_status grg_exponentiate(const grg_field* v, int squaring_steps, grg_field** out);
/* voxelwise mean of n volumes (order-independent) */
grg_status grg_mean_volume(const grg_volume* const* vols, int n, grg_volume** out);
/* voxelwise AND of n 0/1 volumes */
grg_status grg_intersect_masks(const grg_volume* const* masks, int n, grg_volume** out);

/* ------------------------------------------------------------------ */
/* configuration                                                       */

typedef struct grg_config grg_config;

grg_config* grg_config_default(void);
grg_status grg_config_read(const char* path, grg_config** out);
grg_status grg_config_to_json(const grg_config* cfg, char** out);
void grg_config_free(grg_config* cfg);

/* ------------------------------------------------------------------ */
/* groups and registration                                             */

typedef struct grg_group grg_group;
typedef struct grg_result grg_result;

grg_group* grg_group_create(void);
/* copies its inputs; labels may be NULL */
grg_status grg_group_add_member(grg_group* group, const grg_volume* image,
                                const grg_volume* mask, const grg_volume* labels);
int grg_group_size(const grg_group* group);
void grg_group_free(grg_group* group);

/* called after every loss evaluation with the stage index (0-based),
 * iteration (1-based) and the loss value at that iterate */
typedef void (*grg_progress_fn)(int stage, int iteration, double loss, void* user);

grg_status grg_register_group(const grg_group* group, const grg_config* cfg,
                              grg_progress_fn progress_or_null, void* user,
                              grg_result** out);

int grg_result_member_count(const grg_result* res);
int grg_result_stage_count(const grg_result* res);
/* borrowed pointers, valid until grg_result_free */
const grg_field* grg_result_velocity(const grg_result* res, int member);
const grg_field* grg_result_displacement(const grg_result* res, int member);
void grg_result_final_loss(const grg_result* res, double* total, double* similarity,
                           double* regularizer);
double grg_result_wall_seconds(const grg_result* res);
int grg_result_iterations(const grg_result* res, int stage);
int grg_result_trace_length(const grg_result* res, int stage);
grg_status grg_result_trace_entry(const grg_result* res, int stage, int index,
                                  int* iteration, double* loss, double* best_loss);
void grg_result_free(grg_result* res);

/* ------------------------------------------------------------------ */
/* synthetic data                                                      */

typedef struct grg_synth grg_synth;

grg_status grg_synth_create(const int dims[3], const double spacing[3], int n,
                            double amplitude_mm, double tumor_growth_mm,
                            double intensity_shift, uint64_t seed, grg_synth** out);
int grg_synth_member_count(const grg_synth* s);
/* borrowed pointers, valid until grg_synth_free */
const grg_volume* grg_synth_image(const grg_synth* s, int member);
const grg_volume* grg_synth_mask(const grg_synth* s, int member);
const grg_volume* grg_synth_labels(const grg_synth* s, int member);
const grg_field* grg_synth_true_velocity(const grg_synth* s, int member);
const grg_volume* grg_synth_phantom_image(const grg_synth* s);
const grg_volume* grg_synth_phantom_labels(const grg_synth* s);
const grg_volume* grg_synth_phantom_head(const grg_synth* s);
void grg_synth_free(grg_synth* s);

/* ------------------------------------------------------------------ */
/* evaluation                                                          */

typedef struct grg_report grg_report;

typedef enum grg_metric {
    GRG_METRIC_DICE_CSF = 0,
    GRG_METRIC_DICE_GM = 1,
    GRG_METRIC_DICE_WM = 2,
    GRG_METRIC_DICE_TUMOR = 3,
    GRG_METRIC_MEAN_SSIM = 4,
    GRG_METRIC_CENTRALITY_MM = 5,
    GRG_METRIC_CENTRALITY_MEAN_NORM_MM = 6,
    GRG_METRIC_FOLDING_PERCENT = 7,
    GRG_METRIC_JACOBIAN_SD = 8,
    GRG_METRIC_MASKED_VOXELS = 9
} grg_metric;

/* The battery over n members, restricted to `region` (a 0/1 volume).
 * warped_images / warped_labels may be NULL; the metrics needing them
 * come back as NaN. */
grg_status grg_evaluate(const grg_field* const* fields, int n, const grg_volume* region,
                        const grg_volume* const* warped_images_or_null,
                        const grg_volume* const* warped_labels_or_null, grg_report** out);

grg_status grg_report_value(const grg_report* rep, grg_metric metric, double* out);
/* one header line + one row (+ nothing else); group_id labels the row */
grg_status grg_report_csv(const grg_report* rep, const char* group_id, char** out);
grg_status grg_report_text(const grg_report* rep, const char* group_id, char** out);
void grg_report_free(grg_report* rep);

/* two-sided exact signed-rank test on k pairs (2 <= k <= 25) */
grg_status grg_wilcoxon(const double* x, const double* y, int k, double* statistic,
                        double* p_value);

#ifdef __cplusplus
}
#endif

#endif /* GROUPREG_H */
